//! Registry collections and their on-disk form.
//!
//! State lives behind an `Arc` snapshot. Writers are serialized on one
//! mutex: they clone the current snapshot, mutate the clone, persist the
//! collections they touched and only then publish it. Readers never block on
//! disk i/o and never observe a half-applied change.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::TtpError;
use crate::crypto::{PassHash, SecretKey, DOCUMENT_KEY_LEN};
use crate::ids::{FileId, FolderId};

pub const USER_COLLECTION: &str = "User";
pub const FILE_INFO_COLLECTION: &str = "FileInfo";
pub const UID_COLLECTION: &str = "UID";
pub const FOLDER_KEY_COLLECTION: &str = "FolderKey";
pub const KEY_ALLOC_COLLECTION: &str = "KeyAlloc";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserRecord {
    pub email: String,
    pub pass_hash: PassHash,
    #[serde(default)]
    pub folders: Vec<FolderId>,
    #[serde(default)]
    pub inverted_indexes: BTreeMap<FolderId, FileId>,
}

/// One registered document. The field names on disk follow the original
/// deployment's `FileInfo` collection.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    #[serde(rename = "_id")]
    pub record_id: String,
    #[serde(rename = "randomKeyId")]
    pub ref_num: u64,
    #[serde(with = "crate::encoding::base64_array")]
    pub key: [u8; DOCUMENT_KEY_LEN],
    #[serde(rename = "folderId")]
    pub folder_id: FolderId,
    #[serde(rename = "fileId")]
    pub file_id: FileId,
    pub name: String,
    #[serde(rename = "userId")]
    pub owner_id: String,
}

impl fmt::Debug for FileRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FileRecord")
            .field("record_id", &self.record_id)
            .field("ref_num", &self.ref_num)
            .field("key", &"<redacted>")
            .field("folder_id", &self.folder_id)
            .field("file_id", &self.file_id)
            .field("name", &self.name)
            .field("owner_id", &self.owner_id)
            .finish()
    }
}

/// A [`FileRecord`] without its key, safe to hand out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FileInfoView {
    pub record_id: String,
    pub ref_num: u64,
    pub folder_id: FolderId,
    pub file_id: FileId,
    pub name: String,
    pub owner_id: String,
}

impl From<&FileRecord> for FileInfoView {
    fn from(r: &FileRecord) -> Self {
        FileInfoView {
            record_id: r.record_id.clone(),
            ref_num: r.ref_num,
            folder_id: r.folder_id.clone(),
            file_id: r.file_id.clone(),
            name: r.name.clone(),
            owner_id: r.owner_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FolderKeyRecord {
    pub folder_id: FolderId,
    pub secret_key: SecretKey,
    pub owner_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UidCounter {
    pub next: u64,
}

impl Default for UidCounter {
    fn default() -> Self {
        UidCounter { next: 1 }
    }
}

/// Keys minted by `setup_keys` that are not yet bound to a file.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KeyAllocation {
    pub owner_id: String,
    #[serde(default)]
    pub secret_keys: Vec<SecretKey>,
    /// ref_num → key
    #[serde(default, with = "ref_map")]
    pub document_keys: BTreeMap<u64, [u8; DOCUMENT_KEY_LEN]>,
}

impl fmt::Debug for KeyAllocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyAllocation")
            .field("owner_id", &self.owner_id)
            .field("secret_keys", &self.secret_keys.len())
            .field("ref_nums", &self.document_keys.keys().collect::<Vec<_>>())
            .finish()
    }
}

mod ref_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::crypto::DOCUMENT_KEY_LEN;
    use crate::encoding::{b64_decode, b64_encode};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<u64, [u8; DOCUMENT_KEY_LEN]>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let m: BTreeMap<String, String> =
            map.iter().map(|(k, v)| (k.to_string(), b64_encode(v))).collect();
        m.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<u64, [u8; DOCUMENT_KEY_LEN]>, D::Error> {
        use serde::de::Error;
        let m = BTreeMap::<String, String>::deserialize(d)?;
        m.into_iter()
            .map(|(k, v)| {
                let n: u64 = k.parse().map_err(D::Error::custom)?;
                let bytes = b64_decode(&v).map_err(D::Error::custom)?;
                let key: [u8; DOCUMENT_KEY_LEN] = bytes
                    .as_slice()
                    .try_into()
                    .map_err(|_| D::Error::custom("document key must be 32 bytes"))?;
                Ok((n, key))
            })
            .collect()
    }
}

/// All persisted collections.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegistryState {
    pub users: BTreeMap<String, UserRecord>,
    pub files: BTreeMap<FileId, FileRecord>,
    pub uid: UidCounter,
    pub folder_keys: BTreeMap<FolderId, FolderKeyRecord>,
    pub allocations: BTreeMap<String, KeyAllocation>,
}

impl RegistryState {
    /// Takes `n` consecutive values from the counter and returns the first.
    pub fn take_uids(&mut self, n: u64) -> u64 {
        let first = self.uid.next;
        self.uid.next = first.checked_add(n).expect("uid counter overflow");
        first
    }

    pub fn file_by_ref(&self, ref_num: u64) -> Option<&FileRecord> {
        self.files.values().find(|r| r.ref_num == ref_num)
    }
}

/// Which collections a transaction touched.
#[derive(Debug, Default, Clone, Copy)]
pub struct Dirty {
    pub users: bool,
    pub files: bool,
    pub uid: bool,
    pub folder_keys: bool,
    pub allocations: bool,
}

impl Dirty {
    fn any(&self) -> bool {
        self.users || self.files || self.uid || self.folder_keys || self.allocations
    }
}

/// Where collections are kept.
#[derive(Debug, Clone)]
pub enum RegistryStore {
    Memory,
    /// One `<Collection>.json` file per collection.
    Dir(PathBuf),
}

impl RegistryStore {
    fn load(&self) -> Result<RegistryState, TtpError> {
        let RegistryStore::Dir(dir) = self else {
            return Ok(RegistryState::default());
        };
        fs::create_dir_all(dir).map_err(io_err)?;
        let users: Vec<UserRecord> = read_collection(dir, USER_COLLECTION)?.unwrap_or_default();
        let files: Vec<FileRecord> = read_collection(dir, FILE_INFO_COLLECTION)?.unwrap_or_default();
        let uid: UidCounter = read_collection(dir, UID_COLLECTION)?.unwrap_or_default();
        let folder_keys: Vec<FolderKeyRecord> =
            read_collection(dir, FOLDER_KEY_COLLECTION)?.unwrap_or_default();
        let allocations: Vec<KeyAllocation> =
            read_collection(dir, KEY_ALLOC_COLLECTION)?.unwrap_or_default();

        let mut state = RegistryState {
            users: users.into_iter().map(|u| (u.email.clone(), u)).collect(),
            files: files.into_iter().map(|f| (f.file_id.clone(), f)).collect(),
            uid,
            folder_keys: folder_keys
                .into_iter()
                .map(|k| (k.folder_id.clone(), k))
                .collect(),
            allocations: allocations
                .into_iter()
                .map(|a| (a.owner_id.clone(), a))
                .collect(),
        };

        // A counter file lost or rolled back must never hand out a value
        // already in use.
        let max_used = state
            .files
            .values()
            .flat_map(|f| [f.ref_num, f.record_id.parse().unwrap_or(0)])
            .chain(
                state
                    .allocations
                    .values()
                    .flat_map(|a| a.document_keys.keys().copied()),
            )
            .max()
            .unwrap_or(0);
        if state.uid.next <= max_used {
            log::warn!("uid counter behind stored records; advancing to {}", max_used + 1);
            state.uid.next = max_used + 1;
        }
        Ok(state)
    }

    fn persist(&self, state: &RegistryState, dirty: Dirty) -> Result<(), TtpError> {
        let RegistryStore::Dir(dir) = self else {
            return Ok(());
        };
        if dirty.users {
            write_collection(dir, USER_COLLECTION, &state.users.values().collect::<Vec<_>>())?;
        }
        if dirty.files {
            write_collection(dir, FILE_INFO_COLLECTION, &state.files.values().collect::<Vec<_>>())?;
        }
        if dirty.uid {
            write_collection(dir, UID_COLLECTION, &state.uid)?;
        }
        if dirty.folder_keys {
            write_collection(
                dir,
                FOLDER_KEY_COLLECTION,
                &state.folder_keys.values().collect::<Vec<_>>(),
            )?;
        }
        if dirty.allocations {
            write_collection(
                dir,
                KEY_ALLOC_COLLECTION,
                &state.allocations.values().collect::<Vec<_>>(),
            )?;
        }
        Ok(())
    }
}

fn io_err(e: std::io::Error) -> TtpError {
    TtpError::Internal(format!("registry i/o: {e}"))
}

fn collection_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.json"))
}

fn read_collection<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Option<T>, TtpError> {
    let path = collection_path(dir, name);
    match fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| TtpError::Internal(format!("corrupt collection {name}: {e}"))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(e)),
    }
}

fn write_collection<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), TtpError> {
    // Going through Value sorts object keys.
    let value = serde_json::to_value(value).map_err(|e| TtpError::Internal(e.to_string()))?;
    let mut bytes =
        serde_json::to_vec_pretty(&value).map_err(|e| TtpError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    let path = collection_path(dir, name);
    let tmp = dir.join(format!(".{name}.json.tmp"));
    let mut f = fs::File::create(&tmp).map_err(io_err)?;
    f.write_all(&bytes).map_err(io_err)?;
    f.sync_all().map_err(io_err)?;
    fs::rename(&tmp, &path).map_err(io_err)
}

pub struct Registry {
    store: RegistryStore,
    current: RwLock<Arc<RegistryState>>,
    writer: Mutex<()>,
}

impl Registry {
    pub fn open(store: RegistryStore) -> Result<Self, TtpError> {
        let state = store.load()?;
        Ok(Registry {
            store,
            current: RwLock::new(Arc::new(state)),
            writer: Mutex::new(()),
        })
    }

    pub fn snapshot(&self) -> Arc<RegistryState> {
        self.current.read().expect("registry lock poisoned").clone()
    }

    /// Runs `f` against a private copy of the state and publishes it if `f`
    /// succeeds and the touched collections were written.
    pub fn commit<T>(
        &self,
        f: impl FnOnce(&mut RegistryState, &mut Dirty) -> Result<T, TtpError>,
    ) -> Result<T, TtpError> {
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let mut next = RegistryState::clone(&self.snapshot());
        let mut dirty = Dirty::default();
        let out = f(&mut next, &mut dirty)?;
        if dirty.any() {
            self.store.persist(&next, dirty)?;
            *self.current.write().expect("registry lock poisoned") = Arc::new(next);
        }
        Ok(out)
    }
}
