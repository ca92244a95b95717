use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{FileEntry, FolderInfo, FolderMeta, ShareGrant, StorageBackend, StorageError};
use crate::ids::{FileId, FolderId};

const META_FILE: &str = ".meta.json";

/// Stores each folder as a directory under `root`:
///
/// ```text
/// <root>/<folderId>/<fileId>      content, verbatim
/// <root>/<folderId>/.meta.json    names, MIME types, upload order, grants
/// ```
///
/// Every write goes to a temporary file first and is renamed into place.
/// Content is written before metadata, so a listed file is always readable.
pub struct LocalDirStorage {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl LocalDirStorage {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(LocalDirStorage {
            root,
            write_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ()> {
        self.write_lock.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn folder_dir(&self, id: &FolderId) -> Result<PathBuf, StorageError> {
        if !is_safe_component(id.as_str()) {
            return Err(StorageError::UnknownFolder(id.clone()));
        }
        Ok(self.root.join(id.as_str()))
    }

    fn load_meta(&self, id: &FolderId) -> Result<FolderMeta, StorageError> {
        let path = self.folder_dir(id)?.join(META_FILE);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StorageError::UnknownFolder(id.clone()))
            }
            Err(e) => return Err(e.into()),
        };
        serde_json::from_slice(&bytes).map_err(|e| StorageError::Corrupt(format!("{}: {e}", path.display())))
    }

    fn save_meta(&self, meta: &FolderMeta) -> Result<(), StorageError> {
        // Round-tripping through Value sorts object keys.
        let value = serde_json::to_value(meta).map_err(|e| StorageError::Corrupt(e.to_string()))?;
        let bytes = serde_json::to_vec_pretty(&value).map_err(|e| StorageError::Corrupt(e.to_string()))?;
        write_atomic(&self.folder_dir(&meta.folder_id)?.join(META_FILE), &bytes)
    }

    fn all_folder_ids(&self) -> Result<Vec<FolderId>, StorageError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            if entry.file_type()?.is_dir() && entry.path().join(META_FILE).exists() {
                if let Some(name) = entry.file_name().to_str() {
                    out.push(FolderId::new(name));
                }
            }
        }
        Ok(out)
    }
}

fn is_safe_component(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StorageError> {
    let dir = path.parent().expect("storage paths always have a parent");
    let mut tmp = tempfile_in(dir)?;
    tmp.1.write_all(bytes)?;
    tmp.1.sync_all()?;
    drop(tmp.1);
    fs::rename(&tmp.0, path)?;
    Ok(())
}

fn tempfile_in(dir: &Path) -> Result<(PathBuf, fs::File), StorageError> {
    for _ in 0..16 {
        let name = format!(".tmp-{}", crate::ids::random_id(&mut rand::thread_rng()));
        let path = dir.join(name);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => return Ok((path, f)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(StorageError::Io("could not create a temporary file".into()))
}

impl StorageBackend for LocalDirStorage {
    fn create_folder(&self, owner: &str, name: &str) -> Result<FolderId, StorageError> {
        let _guard = self.lock();
        let meta = FolderMeta::new(owner, name)?;
        fs::create_dir(self.folder_dir(&meta.folder_id)?)?;
        self.save_meta(&meta)?;
        Ok(meta.folder_id)
    }

    fn folder_info(&self, folder_id: &FolderId) -> Result<FolderInfo, StorageError> {
        Ok(self.load_meta(folder_id)?.info())
    }

    fn list_folders(&self, caller: &str) -> Result<Vec<FolderInfo>, StorageError> {
        let mut out = Vec::new();
        for id in self.all_folder_ids()? {
            let meta = self.load_meta(&id)?;
            if meta.access(caller).can_read() {
                out.push(meta.info());
            }
        }
        out.sort_by(|a, b| (a.created_at, &a.folder_id).cmp(&(b.created_at, &b.folder_id)));
        Ok(out)
    }

    fn upload(
        &self,
        caller: &str,
        folder_id: &FolderId,
        name: &str,
        mime: &str,
        content: &[u8],
    ) -> Result<FileId, StorageError> {
        let _guard = self.lock();
        let mut meta = self.load_meta(folder_id)?;
        meta.require_owner(caller, StorageError::AccessDenied)?;
        let entry = meta.add_file(name, mime, content.len() as u64)?;
        write_atomic(&self.folder_dir(folder_id)?.join(entry.file_id.as_str()), content)?;
        self.save_meta(&meta)?;
        Ok(entry.file_id)
    }

    fn download(&self, caller: &str, file_id: &FileId) -> Result<Vec<u8>, StorageError> {
        let folder_id = self.folder_of(file_id)?;
        self.load_meta(&folder_id)?.require_read(caller)?;
        match fs::read(self.folder_dir(&folder_id)?.join(file_id.as_str())) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(StorageError::UnknownFile(file_id.clone()))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn delete(&self, caller: &str, file_id: &FileId) -> Result<(), StorageError> {
        let _guard = self.lock();
        let folder_id = self.folder_of(file_id)?;
        let mut meta = self.load_meta(&folder_id)?;
        meta.require_owner(caller, StorageError::AccessDenied)?;
        meta.files.retain(|f| &f.file_id != file_id);
        self.save_meta(&meta)?;
        fs::remove_file(self.folder_dir(&folder_id)?.join(file_id.as_str()))?;
        Ok(())
    }

    fn list_folder(&self, folder_id: &FolderId, caller: &str) -> Result<Vec<FileEntry>, StorageError> {
        let meta = self.load_meta(folder_id)?;
        meta.require_read(caller)?;
        Ok(meta.files)
    }

    fn share_folder(
        &self,
        folder_id: &FolderId,
        grantee_email: &str,
        caller: &str,
    ) -> Result<ShareGrant, StorageError> {
        let _guard = self.lock();
        let mut meta = self.load_meta(folder_id)?;
        meta.require_owner(caller, StorageError::NotOwner)?;
        let (grant, created) = meta.grant(grantee_email)?;
        if created {
            self.save_meta(&meta)?;
        }
        Ok(grant)
    }

    fn grants(&self, folder_id: &FolderId) -> Result<Vec<ShareGrant>, StorageError> {
        Ok(self.load_meta(folder_id)?.grants)
    }

    fn find_by_name(
        &self,
        caller: &str,
        folder_id: &FolderId,
        name: &str,
    ) -> Result<Option<FileId>, StorageError> {
        let meta = self.load_meta(folder_id)?;
        meta.require_read(caller)?;
        Ok(meta.find_by_name(name))
    }

    fn folder_of(&self, file_id: &FileId) -> Result<FolderId, StorageError> {
        if is_safe_component(file_id.as_str()) {
            for folder in self.all_folder_ids()? {
                if self.root.join(folder.as_str()).join(file_id.as_str()).is_file() {
                    return Ok(folder);
                }
            }
        }
        Err(StorageError::UnknownFile(file_id.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::conformance;

    #[test]
    fn conforms() {
        let dirs = std::cell::RefCell::new(Vec::new());
        conformance::run_all(|| {
            let dir = tempfile::tempdir().unwrap();
            let s = LocalDirStorage::open(dir.path()).unwrap();
            dirs.borrow_mut().push(dir);
            s
        });
    }

    #[test]
    fn layout_and_canonical_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let s = LocalDirStorage::open(dir.path()).unwrap();
        let f = s.create_folder("o@x.io", "docs").unwrap();
        let id = s.upload("o@x.io", &f, "a.bin", "application/octet-stream", b"\x00\x01ct").unwrap();
        s.share_folder(&f, "u@x.io", "o@x.io").unwrap();

        let content = fs::read(dir.path().join(f.as_str()).join(id.as_str())).unwrap();
        assert_eq!(content, b"\x00\x01ct");

        let meta_text = fs::read_to_string(dir.path().join(f.as_str()).join(META_FILE)).unwrap();
        let value: serde_json::Value = serde_json::from_str(&meta_text).unwrap();
        let keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(meta_text.find("\"createdAt\"").unwrap() < meta_text.find("\"files\"").unwrap());
    }

    #[test]
    fn reopen_sees_same_state() {
        let dir = tempfile::tempdir().unwrap();
        let (f, id) = {
            let s = LocalDirStorage::open(dir.path()).unwrap();
            let f = s.create_folder("o@x.io", "docs").unwrap();
            let id = s.upload("o@x.io", &f, "a", "t", b"bytes").unwrap();
            s.share_folder(&f, "u@x.io", "o@x.io").unwrap();
            (f, id)
        };
        let s = LocalDirStorage::open(dir.path()).unwrap();
        assert_eq!(s.download("u@x.io", &id).unwrap(), b"bytes");
        assert_eq!(s.list_folders("u@x.io").unwrap()[0].folder_id, f);
    }

    #[test]
    fn path_traversal_ids_are_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let s = LocalDirStorage::open(dir.path()).unwrap();
        let bad = FileId::new("../etc/passwd");
        assert_eq!(s.download("o@x.io", &bad), Err(StorageError::UnknownFile(bad)));
        let bad_folder = FolderId::new("..");
        assert_eq!(s.folder_info(&bad_folder), Err(StorageError::UnknownFolder(bad_folder)));
    }
}
