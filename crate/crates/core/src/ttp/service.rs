use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use rand::rngs::OsRng;
use rand::RngCore;
use rsa::traits::PublicKeyParts;

use super::api::*;
use super::outbox::Outbox;
use super::registry::{
    FileInfoView, FileRecord, FolderKeyRecord, KeyAllocation, Registry, RegistryState,
    RegistryStore, UserRecord,
};
use super::{validate_email, TtpConfig, TtpError};
use crate::crypto::{
    encrypt_keyword, generate_document_key, public_key_from_pem, verify_passphrase, wrap_key,
    DocumentKey, SecretKey, Trapdoor,
};
use crate::encoding::b64_encode;
use crate::ids::{FileId, FolderId};
use crate::storage::{normalize_identity, Access, StorageBackend};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub token: String,
    pub email: String,
    pub expires_at: DateTime<Utc>,
}

pub struct TtpService {
    config: TtpConfig,
    registry: Registry,
    sessions: RwLock<HashMap<String, Session>>,
    outbox: Outbox,
    storage: Arc<dyn StorageBackend>,
}

impl TtpService {
    pub fn new(
        config: TtpConfig,
        store: RegistryStore,
        outbox: Outbox,
        storage: Arc<dyn StorageBackend>,
    ) -> Result<Self, TtpError> {
        Ok(TtpService {
            config,
            registry: Registry::open(store)?,
            sessions: RwLock::new(HashMap::new()),
            outbox,
            storage,
        })
    }

    /// Everything in memory, default configuration.
    pub fn in_memory(storage: Arc<dyn StorageBackend>) -> Self {
        Self::new(TtpConfig::default(), RegistryStore::Memory, Outbox::in_memory(), storage)
            .expect("memory registry cannot fail to open")
    }

    pub fn config(&self) -> &TtpConfig {
        &self.config
    }

    pub fn outbox(&self) -> &Outbox {
        &self.outbox
    }

    /// Current collections, for inspection.
    pub fn state(&self) -> Arc<RegistryState> {
        self.registry.snapshot()
    }

    pub fn user(&self, email: &str) -> Option<UserRecord> {
        self.registry
            .snapshot()
            .users
            .get(&normalize_identity(email))
            .cloned()
    }

    pub fn file_info(&self, file_id: &FileId) -> Option<FileInfoView> {
        self.registry.snapshot().files.get(file_id).map(FileInfoView::from)
    }

    /// FileID of the index last registered for `folder`.
    pub fn index_file_of(&self, folder: &FolderId) -> Option<FileId> {
        let snap = self.registry.snapshot();
        let owner = &snap.folder_keys.get(folder)?.owner_id;
        snap.users.get(owner)?.inverted_indexes.get(folder).cloned()
    }

    pub fn next_uid(&self) -> Result<u64, TtpError> {
        self.registry.commit(|s, d| {
            d.uid = true;
            Ok(s.take_uids(1))
        })
    }

    /// Whether `email` has an account. If not, an invite is queued once per
    /// `(folder, email)`.
    pub fn check_user(&self, email: &str, folder: Option<&FolderId>) -> Result<bool, TtpError> {
        let email = validate_email(email)?;
        if self.registry.snapshot().users.contains_key(&email) {
            return Ok(true);
        }
        self.outbox.invite(&email, folder)?;
        Ok(false)
    }

    pub fn authenticate(&self, token: &str) -> Result<Session, TtpError> {
        let now = Utc::now();
        let found = self
            .sessions
            .read()
            .expect("session lock poisoned")
            .get(token)
            .cloned();
        match found {
            Some(s) if s.expires_at > now => Ok(s),
            Some(_) => {
                self.sessions.write().expect("session lock poisoned").remove(token);
                Err(TtpError::Unauthenticated)
            }
            None => Err(TtpError::Unauthenticated),
        }
    }

    pub fn logout(&self, token: &str) {
        self.sessions.write().expect("session lock poisoned").remove(token);
    }

    fn access(&self, folder: &FolderId, email: &str) -> Result<Access, TtpError> {
        Ok(self.storage.access(folder, email)?)
    }

    fn require_reader(&self, folder: &FolderId, email: &str) -> Result<(), TtpError> {
        if self.access(folder, email)?.can_read() {
            Ok(())
        } else {
            Err(TtpError::AccessDenied)
        }
    }

    fn require_owner(&self, folder: &FolderId, email: &str) -> Result<(), TtpError> {
        match self.access(folder, email)? {
            Access::Owner => Ok(()),
            _ => Err(TtpError::NotOwner),
        }
    }

    fn mint_keys(&self, owner: &str, n: u32, existing: Option<SecretKey>) -> Result<(SecretKey, Vec<DocumentKey>), TtpError> {
        let sk = match existing {
            Some(sk) => sk,
            None => SecretKey::random(&mut OsRng, &self.config.key_label)?,
        };
        let fresh = self.registry.commit(|s, d| {
            let first = s.take_uids(u64::from(n));
            d.uid = true;
            let alloc = s
                .allocations
                .entry(owner.to_owned())
                .or_insert_with(|| KeyAllocation {
                    owner_id: owner.to_owned(),
                    secret_keys: Vec::new(),
                    document_keys: Default::default(),
                });
            if !alloc.secret_keys.contains(&sk) {
                alloc.secret_keys.push(sk.clone());
            }
            let mut keys = Vec::with_capacity(n as usize);
            for ref_num in first..first + u64::from(n) {
                let dk = generate_document_key(ref_num, &mut OsRng)?;
                alloc.document_keys.insert(ref_num, *dk.key());
                keys.push(dk);
            }
            d.allocations = true;
            Ok(keys)
        })?;
        Ok((sk, fresh))
    }
}

fn parse_secret_key(s: &str) -> Result<SecretKey, TtpError> {
    SecretKey::from_base64(s).map_err(|e| TtpError::KeyFormat(format!("secret key: {e}")))
}

impl KeyService for TtpService {
    fn signup(&self, req: &SignupRequest) -> Result<SignupResponse, TtpError> {
        let email = validate_email(&req.email)?;
        self.registry.commit(|s, d| {
            if s.users.contains_key(&email) {
                return Err(TtpError::DuplicateEmail);
            }
            s.users.insert(
                email.clone(),
                UserRecord {
                    email: email.clone(),
                    pass_hash: req.pass_hash.clone(),
                    folders: Vec::new(),
                    inverted_indexes: Default::default(),
                },
            );
            d.users = true;
            Ok(())
        })?;
        log::info!("registered {email}");
        Ok(SignupResponse { email })
    }

    fn login(&self, req: &LoginRequest) -> Result<LoginResponse, TtpError> {
        let email = normalize_identity(&req.email);
        let user = self
            .registry
            .snapshot()
            .users
            .get(&email)
            .cloned()
            .ok_or_else(|| TtpError::unknown_user(&email))?;
        if !verify_passphrase(&req.passphrase, &user.pass_hash)? {
            return Err(TtpError::IncorrectPassphrase);
        }
        let mut raw = [0u8; 32];
        OsRng.fill_bytes(&mut raw);
        let ttl = chrono::Duration::from_std(self.config.session_ttl)
            .map_err(|e| TtpError::Internal(e.to_string()))?;
        let session = Session {
            token: hex::encode(raw),
            email: email.clone(),
            expires_at: Utc::now() + ttl,
        };
        let mut sessions = self.sessions.write().expect("session lock poisoned");
        let now = Utc::now();
        sessions.retain(|_, s| s.expires_at > now);
        sessions.insert(session.token.clone(), session.clone());
        Ok(LoginResponse {
            token: session.token,
            email,
            expires_at: session.expires_at,
        })
    }

    fn setup_keys(&self, token: &str, req: &SetupKeysRequest) -> Result<SetupKeysResponse, TtpError> {
        let session = self.authenticate(token)?;
        if req.n == 0 || req.n > self.config.max_keys_per_setup {
            return Err(TtpError::InvalidRequest(format!(
                "n must be between 1 and {}",
                self.config.max_keys_per_setup
            )));
        }
        let existing = match &req.folder_id {
            Some(folder) => {
                self.require_owner(folder, &session.email)?;
                self.registry
                    .snapshot()
                    .folder_keys
                    .get(folder)
                    .map(|r| r.secret_key.clone())
            }
            None => None,
        };
        let (sk, keys) = self.mint_keys(&session.email, req.n, existing)?;
        Ok(SetupKeysResponse {
            secret_key: sk.to_base64(),
            document_keys: keys
                .iter()
                .map(|k| DocumentKeyDto {
                    key: b64_encode(k.key()),
                    ref_num: k.ref_num(),
                })
                .collect(),
        })
    }

    fn register_uploads(&self, token: &str, req: &RegisterRequest) -> Result<(), TtpError> {
        let session = self.authenticate(token)?;
        let owner = session.email;
        let sk = parse_secret_key(&req.secret_key)?;
        self.require_owner(&req.folder_id, &owner)?;
        for b in &req.bindings {
            let folder = self.storage.folder_of(&b.file_id)?;
            if folder != req.folder_id {
                return Err(TtpError::InvalidRequest(format!(
                    "file {} is not in folder {}",
                    b.file_id, req.folder_id
                )));
            }
        }

        self.registry.commit(|s, d| {
            match s.folder_keys.get(&req.folder_id) {
                Some(rec) if rec.secret_key != sk => return Err(TtpError::SecretKeyMismatch),
                Some(_) => {}
                None => {
                    let issued = s
                        .allocations
                        .get(&owner)
                        .is_some_and(|a| a.secret_keys.contains(&sk));
                    if !issued {
                        return Err(TtpError::SecretKeyMismatch);
                    }
                    s.folder_keys.insert(
                        req.folder_id.clone(),
                        FolderKeyRecord {
                            folder_id: req.folder_id.clone(),
                            secret_key: sk.clone(),
                            owner_id: owner.clone(),
                        },
                    );
                    if let Some(a) = s.allocations.get_mut(&owner) {
                        a.secret_keys.retain(|k| k != &sk);
                    }
                    d.folder_keys = true;
                    d.allocations = true;
                }
            }

            for b in &req.bindings {
                if let Some(existing) = s.files.get(&b.file_id) {
                    if existing.ref_num == b.ref_num && existing.owner_id == owner {
                        continue;
                    }
                    return Err(TtpError::InvalidRequest(format!(
                        "file {} is already registered",
                        b.file_id
                    )));
                }
                let key = s
                    .allocations
                    .get_mut(&owner)
                    .and_then(|a| a.document_keys.remove(&b.ref_num))
                    .ok_or_else(|| TtpError::unknown_ref_num(b.ref_num))?;
                let record_id = s.take_uids(1).to_string();
                s.files.insert(
                    b.file_id.clone(),
                    FileRecord {
                        record_id,
                        ref_num: b.ref_num,
                        key,
                        folder_id: req.folder_id.clone(),
                        file_id: b.file_id.clone(),
                        name: b.name.clone().unwrap_or_default(),
                        owner_id: owner.clone(),
                    },
                );
                d.files = true;
                d.uid = true;
                d.allocations = true;
            }

            let user = s
                .users
                .get_mut(&owner)
                .ok_or_else(|| TtpError::unknown_user(&owner))?;
            if !user.folders.contains(&req.folder_id) {
                user.folders.push(req.folder_id.clone());
            }
            user.inverted_indexes
                .insert(req.folder_id.clone(), req.index_file_id.clone());
            d.users = true;
            Ok(())
        })?;
        log::info!(
            "registered {} file(s) in folder {}",
            req.bindings.len(),
            req.folder_id
        );
        Ok(())
    }

    fn issue_trapdoor(&self, token: &str, req: &TrapdoorRequest) -> Result<TrapdoorResponse, TtpError> {
        let session = self.authenticate(token)?;
        self.require_reader(&req.folder_id, &session.email)?;
        let sk = self
            .registry
            .snapshot()
            .folder_keys
            .get(&req.folder_id)
            .map(|r| r.secret_key.clone())
            .ok_or_else(|| TtpError::unknown_folder(&req.folder_id))?;
        let trapdoor: Trapdoor = encrypt_keyword(&req.keyword, &sk)?;
        Ok(TrapdoorResponse { trapdoor })
    }

    fn release_key(&self, token: &str, req: &ReleaseKeyRequest) -> Result<ReleaseKeyResponse, TtpError> {
        let session = self.authenticate(token)?;
        let record = self
            .registry
            .snapshot()
            .files
            .get(&req.file_id)
            .cloned()
            .ok_or_else(|| TtpError::unknown_file(&req.file_id))?;
        self.require_reader(&record.folder_id, &session.email)?;
        let public = public_key_from_pem(&req.public_key_pem)?;
        let bits = public.size() * 8;
        if bits < self.config.min_rsa_bits {
            return Err(TtpError::KeyFormat(format!(
                "public key is {bits} bits; at least {} required",
                self.config.min_rsa_bits
            )));
        }
        let dk = DocumentKey::new(record.key, record.ref_num)?;
        let wrapped = wrap_key(&dk, &public)?;
        Ok(ReleaseKeyResponse {
            wrapped_key: wrapped.to_base64(),
            ref_num: record.ref_num,
        })
    }

    fn user_exists(&self, query: &UserExistsQuery) -> Result<UserExistsResponse, TtpError> {
        let registered = self.check_user(&query.email, query.folder_id.as_ref())?;
        Ok(UserExistsResponse { registered })
    }
}
