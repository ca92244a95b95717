//! Untrusted, Drive-like file storage.
//!
//! Backends store bytes verbatim under opaque IDs and enforce folder-level
//! access: the creator of a folder owns it, and owners may grant read access
//! to other identities by email. Nothing here ever looks inside content.

mod local;
mod memory;

pub use local::LocalDirStorage;
pub use memory::MemoryStorage;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{FileId, FolderId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StorageError {
    #[error("unknown folder {0}")]
    UnknownFolder(FolderId),
    #[error("unknown file {0}")]
    UnknownFile(FileId),
    #[error("access denied")]
    AccessDenied,
    #[error("only the folder owner may do this")]
    NotOwner,
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("storage i/o: {0}")]
    Io(String),
    #[error("corrupt storage metadata: {0}")]
    Corrupt(String),
}

impl From<std::io::Error> for StorageError {
    fn from(e: std::io::Error) -> Self {
        StorageError::Io(e.to_string())
    }
}

/// What a caller is to a folder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Owner,
    Grantee,
    None,
}

impl Access {
    pub fn can_read(self) -> bool {
        !matches!(self, Access::None)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShareGrant {
    pub folder_id: FolderId,
    pub grantee_email: String,
    pub granted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FileEntry {
    pub file_id: FileId,
    pub name: String,
    pub mime: String,
    pub size: u64,
    pub uploaded_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FolderInfo {
    pub folder_id: FolderId,
    pub name: String,
    pub owner: String,
    pub created_at: DateTime<Utc>,
}

/// Identities are emails, compared case-insensitively.
pub fn normalize_identity(identity: &str) -> String {
    identity.trim().to_ascii_lowercase()
}

pub trait StorageBackend: Send + Sync {
    fn create_folder(&self, owner: &str, name: &str) -> Result<FolderId, StorageError>;

    fn folder_info(&self, folder_id: &FolderId) -> Result<FolderInfo, StorageError>;

    /// Folders the caller owns or has been granted.
    fn list_folders(&self, caller: &str) -> Result<Vec<FolderInfo>, StorageError>;

    /// Stores `content` verbatim as a new file. Only the owner may upload.
    fn upload(
        &self,
        caller: &str,
        folder_id: &FolderId,
        name: &str,
        mime: &str,
        content: &[u8],
    ) -> Result<FileId, StorageError>;

    fn download(&self, caller: &str, file_id: &FileId) -> Result<Vec<u8>, StorageError>;

    fn delete(&self, caller: &str, file_id: &FileId) -> Result<(), StorageError>;

    /// Files in upload order.
    fn list_folder(&self, folder_id: &FolderId, caller: &str) -> Result<Vec<FileEntry>, StorageError>;

    /// Idempotent per `(folder, email)`.
    fn share_folder(
        &self,
        folder_id: &FolderId,
        grantee_email: &str,
        caller: &str,
    ) -> Result<ShareGrant, StorageError>;

    fn grants(&self, folder_id: &FolderId) -> Result<Vec<ShareGrant>, StorageError>;

    /// Most recently uploaded file named exactly `name`.
    fn find_by_name(
        &self,
        caller: &str,
        folder_id: &FolderId,
        name: &str,
    ) -> Result<Option<FileId>, StorageError>;

    /// Folder containing `file_id`.
    fn folder_of(&self, file_id: &FileId) -> Result<FolderId, StorageError>;

    fn access(&self, folder_id: &FolderId, identity: &str) -> Result<Access, StorageError> {
        let info = self.folder_info(folder_id)?;
        let who = normalize_identity(identity);
        if info.owner == who {
            return Ok(Access::Owner);
        }
        let granted = self
            .grants(folder_id)?
            .iter()
            .any(|g| g.grantee_email == who);
        Ok(if granted { Access::Grantee } else { Access::None })
    }

    /// Uploads under `name` and then deletes every older file of that name,
    /// so readers see either the previous or the new file, never neither.
    fn replace_by_name(
        &self,
        caller: &str,
        folder_id: &FolderId,
        name: &str,
        mime: &str,
        content: &[u8],
    ) -> Result<FileId, StorageError> {
        let new_id = self.upload(caller, folder_id, name, mime, content)?;
        for entry in self.list_folder(folder_id, caller)? {
            if entry.name == name && entry.file_id != new_id {
                self.delete(caller, &entry.file_id)?;
            }
        }
        Ok(new_id)
    }
}

impl<T: StorageBackend + ?Sized> StorageBackend for std::sync::Arc<T> {
    fn create_folder(&self, owner: &str, name: &str) -> Result<FolderId, StorageError> {
        (**self).create_folder(owner, name)
    }
    fn folder_info(&self, folder_id: &FolderId) -> Result<FolderInfo, StorageError> {
        (**self).folder_info(folder_id)
    }
    fn list_folders(&self, caller: &str) -> Result<Vec<FolderInfo>, StorageError> {
        (**self).list_folders(caller)
    }
    fn upload(&self, caller: &str, folder_id: &FolderId, name: &str, mime: &str, content: &[u8]) -> Result<FileId, StorageError> {
        (**self).upload(caller, folder_id, name, mime, content)
    }
    fn download(&self, caller: &str, file_id: &FileId) -> Result<Vec<u8>, StorageError> {
        (**self).download(caller, file_id)
    }
    fn delete(&self, caller: &str, file_id: &FileId) -> Result<(), StorageError> {
        (**self).delete(caller, file_id)
    }
    fn list_folder(&self, folder_id: &FolderId, caller: &str) -> Result<Vec<FileEntry>, StorageError> {
        (**self).list_folder(folder_id, caller)
    }
    fn share_folder(&self, folder_id: &FolderId, grantee_email: &str, caller: &str) -> Result<ShareGrant, StorageError> {
        (**self).share_folder(folder_id, grantee_email, caller)
    }
    fn grants(&self, folder_id: &FolderId) -> Result<Vec<ShareGrant>, StorageError> {
        (**self).grants(folder_id)
    }
    fn find_by_name(&self, caller: &str, folder_id: &FolderId, name: &str) -> Result<Option<FileId>, StorageError> {
        (**self).find_by_name(caller, folder_id, name)
    }
    fn folder_of(&self, file_id: &FileId) -> Result<FolderId, StorageError> {
        (**self).folder_of(file_id)
    }
    fn access(&self, folder_id: &FolderId, identity: &str) -> Result<Access, StorageError> {
        (**self).access(folder_id, identity)
    }
    fn replace_by_name(&self, caller: &str, folder_id: &FolderId, name: &str, mime: &str, content: &[u8]) -> Result<FileId, StorageError> {
        (**self).replace_by_name(caller, folder_id, name, mime, content)
    }
}

/// Per-folder metadata shared by both backends. The local backend persists it
/// as `.meta.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub(crate) struct FolderMeta {
    pub folder_id: FolderId,
    pub name: String,
    pub owner: String,
    pub created_at: DateTime<Utc>,
    pub files: Vec<FileEntry>,
    pub grants: Vec<ShareGrant>,
}

impl FolderMeta {
    pub fn new(owner: &str, name: &str) -> Result<Self, StorageError> {
        if name.trim().is_empty() {
            return Err(StorageError::InvalidArgument("folder name must not be empty"));
        }
        let owner = normalize_identity(owner);
        if owner.is_empty() {
            return Err(StorageError::InvalidArgument("owner must not be empty"));
        }
        Ok(FolderMeta {
            folder_id: FolderId::generate(),
            name: name.to_owned(),
            owner,
            created_at: Utc::now(),
            files: Vec::new(),
            grants: Vec::new(),
        })
    }

    pub fn info(&self) -> FolderInfo {
        FolderInfo {
            folder_id: self.folder_id.clone(),
            name: self.name.clone(),
            owner: self.owner.clone(),
            created_at: self.created_at,
        }
    }

    pub fn access(&self, identity: &str) -> Access {
        let who = normalize_identity(identity);
        if who == self.owner {
            Access::Owner
        } else if self.grants.iter().any(|g| g.grantee_email == who) {
            Access::Grantee
        } else {
            Access::None
        }
    }

    pub fn require_read(&self, caller: &str) -> Result<(), StorageError> {
        if self.access(caller).can_read() {
            Ok(())
        } else {
            Err(StorageError::AccessDenied)
        }
    }

    pub fn require_owner(&self, caller: &str, err: StorageError) -> Result<(), StorageError> {
        if self.access(caller) == Access::Owner {
            Ok(())
        } else {
            Err(err)
        }
    }

    pub fn add_file(&mut self, name: &str, mime: &str, size: u64) -> Result<FileEntry, StorageError> {
        if name.is_empty() {
            return Err(StorageError::InvalidArgument("file name must not be empty"));
        }
        let entry = FileEntry {
            file_id: FileId::generate(),
            name: name.to_owned(),
            mime: mime.to_owned(),
            size,
            uploaded_at: Utc::now(),
        };
        self.files.push(entry.clone());
        Ok(entry)
    }

    /// Returns the grant and whether it was newly created.
    pub fn grant(&mut self, grantee: &str) -> Result<(ShareGrant, bool), StorageError> {
        let who = normalize_identity(grantee);
        if who.is_empty() {
            return Err(StorageError::InvalidArgument("grantee email must not be empty"));
        }
        if let Some(existing) = self.grants.iter().find(|g| g.grantee_email == who) {
            return Ok((existing.clone(), false));
        }
        let grant = ShareGrant {
            folder_id: self.folder_id.clone(),
            grantee_email: who,
            granted_at: Utc::now(),
        };
        self.grants.push(grant.clone());
        Ok((grant, true))
    }

    pub fn find_by_name(&self, name: &str) -> Option<FileId> {
        self.files
            .iter()
            .rev()
            .find(|f| f.name == name)
            .map(|f| f.file_id.clone())
    }
}

/// Behavioural checks shared by the backend test suites.
#[cfg(test)]
pub(crate) mod conformance {
    use super::*;

    const OWNER: &str = "owner@example.org";
    const USER: &str = "user@example.org";
    const STRANGER: &str = "nobody@example.org";

    pub fn run_all<S: StorageBackend>(make: impl Fn() -> S) {
        folders_get_distinct_ids(&make());
        upload_download_round_trip(&make());
        access_rules(&make());
        listing_and_sharing(&make());
        find_and_replace_by_name(&make());
        unknown_ids(&make());
    }

    fn folders_get_distinct_ids<S: StorageBackend>(s: &S) {
        let a = s.create_folder(OWNER, "Patient Information").unwrap();
        let b = s.create_folder(OWNER, "Patient Information").unwrap();
        assert_ne!(a, b);
        assert_eq!(a.as_str().len(), crate::ids::GENERATED_ID_LEN);
        assert!(matches!(s.create_folder(OWNER, ""), Err(StorageError::InvalidArgument(_))));
        assert_eq!(s.list_folders(OWNER).unwrap().len(), 2);
    }

    fn upload_download_round_trip<S: StorageBackend>(s: &S) {
        let f = s.create_folder(OWNER, "f").unwrap();
        let empty = s.upload(OWNER, &f, "empty.bin", "application/octet-stream", b"").unwrap();
        assert_eq!(s.download(OWNER, &empty).unwrap(), b"");
        let data: Vec<u8> = (0..3_000_000u32).map(|i| (i * 31 % 251) as u8).collect();
        let big = s.upload(OWNER, &f, "big.bin", "application/octet-stream", &data).unwrap();
        assert_eq!(s.download(OWNER, &big).unwrap(), data);
        assert_ne!(empty, big);
        assert_eq!(s.folder_of(&big).unwrap(), f);
    }

    fn access_rules<S: StorageBackend>(s: &S) {
        let f = s.create_folder(OWNER, "f").unwrap();
        let id = s.upload(OWNER, &f, "a", "text/plain", b"ciphertext").unwrap();
        assert_eq!(s.download(USER, &id), Err(StorageError::AccessDenied));
        assert_eq!(s.list_folder(&f, USER), Err(StorageError::AccessDenied));
        assert_eq!(s.share_folder(&f, STRANGER, USER), Err(StorageError::NotOwner));
        assert_eq!(s.access(&f, USER).unwrap(), Access::None);
        s.share_folder(&f, USER, OWNER).unwrap();
        assert_eq!(s.access(&f, USER).unwrap(), Access::Grantee);
        assert_eq!(s.access(&f, "Owner@Example.org").unwrap(), Access::Owner);
        assert_eq!(s.download(USER, &id).unwrap(), b"ciphertext");
        // grantees read, they do not write
        assert_eq!(s.upload(USER, &f, "x", "t", b"x"), Err(StorageError::AccessDenied));
        assert_eq!(s.delete(USER, &id), Err(StorageError::AccessDenied));
        assert_eq!(s.download(STRANGER, &id), Err(StorageError::AccessDenied));
    }

    fn listing_and_sharing<S: StorageBackend>(s: &S) {
        let f = s.create_folder(OWNER, "Patient Information").unwrap();
        assert!(s.list_folder(&f, OWNER).unwrap().is_empty());
        for i in 1..=5 {
            s.upload(OWNER, &f, &format!("Patient {i}.pdf"), "application/pdf", &[i as u8; 10]).unwrap();
        }
        s.upload(OWNER, &f, "index.json", "application/json", b"{}").unwrap();
        let owner_view = s.list_folder(&f, OWNER).unwrap();
        assert_eq!(owner_view.len(), 6);
        assert_eq!(owner_view[0].name, "Patient 1.pdf");
        assert_eq!(owner_view[5].name, "index.json");

        let g1 = s.share_folder(&f, USER, OWNER).unwrap();
        let g2 = s.share_folder(&f, USER, OWNER).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(s.grants(&f).unwrap().len(), 1);
        assert_eq!(s.list_folder(&f, USER).unwrap(), owner_view);
        assert!(s.list_folders(USER).unwrap().iter().any(|i| i.folder_id == f));

        // grants cover files uploaded later too
        let later = s.upload(OWNER, &f, "Patient 6.pdf", "application/pdf", b"late").unwrap();
        assert_eq!(s.download(USER, &later).unwrap(), b"late");
    }

    fn find_and_replace_by_name<S: StorageBackend>(s: &S) {
        let f = s.create_folder(OWNER, "f").unwrap();
        assert_eq!(s.find_by_name(OWNER, &f, "index.json").unwrap(), None);
        let first = s.replace_by_name(OWNER, &f, "index.json", "application/json", b"{}").unwrap();
        assert_eq!(s.find_by_name(OWNER, &f, "index.json").unwrap(), Some(first.clone()));
        let second = s
            .replace_by_name(OWNER, &f, "index.json", "application/json", br#"{"ab":["x"]}"#)
            .unwrap();
        assert_ne!(first, second);
        assert_eq!(s.find_by_name(OWNER, &f, "index.json").unwrap(), Some(second.clone()));
        assert_eq!(s.download(OWNER, &first), Err(StorageError::UnknownFile(first)));
        assert_eq!(s.list_folder(&f, OWNER).unwrap().len(), 1);

        // ordinary same-name uploads coexist
        let a = s.upload(OWNER, &f, "dup.pdf", "application/pdf", b"1").unwrap();
        let b = s.upload(OWNER, &f, "dup.pdf", "application/pdf", b"2").unwrap();
        assert_ne!(a, b);
        assert_eq!(s.find_by_name(OWNER, &f, "dup.pdf").unwrap(), Some(b));
        assert_eq!(s.find_by_name(OWNER, &f, "missing").unwrap(), None);
    }

    fn unknown_ids<S: StorageBackend>(s: &S) {
        let ghost_folder = FolderId::new("1nope");
        let ghost_file = FileId::new("1nope");
        assert_eq!(
            s.upload(OWNER, &ghost_folder, "a", "b", b""),
            Err(StorageError::UnknownFolder(ghost_folder.clone()))
        );
        assert_eq!(
            s.download(OWNER, &ghost_file),
            Err(StorageError::UnknownFile(ghost_file.clone()))
        );
        assert_eq!(
            s.list_folder(&ghost_folder, OWNER),
            Err(StorageError::UnknownFolder(ghost_folder.clone()))
        );
        assert_eq!(
            s.find_by_name(OWNER, &ghost_folder, "x"),
            Err(StorageError::UnknownFolder(ghost_folder.clone()))
        );
        assert_eq!(
            s.share_folder(&ghost_folder, USER, OWNER),
            Err(StorageError::UnknownFolder(ghost_folder))
        );
    }
}
