use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::{FileEntry, FolderInfo, FolderMeta, ShareGrant, StorageBackend, StorageError};
use crate::ids::{FileId, FolderId};

#[derive(Default)]
struct State {
    folders: HashMap<FolderId, FolderMeta>,
    blobs: HashMap<FileId, (FolderId, Arc<Vec<u8>>)>,
}

/// Process-local backend. All state sits behind one lock, so every operation
/// is atomic with respect to the others.
#[derive(Default)]
pub struct MemoryStorage {
    state: RwLock<State>,
}

impl MemoryStorage {
    pub fn new() -> Self {
        Self::default()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }
}

impl State {
    fn folder(&self, id: &FolderId) -> Result<&FolderMeta, StorageError> {
        self.folders
            .get(id)
            .ok_or_else(|| StorageError::UnknownFolder(id.clone()))
    }

    fn folder_mut(&mut self, id: &FolderId) -> Result<&mut FolderMeta, StorageError> {
        self.folders
            .get_mut(id)
            .ok_or_else(|| StorageError::UnknownFolder(id.clone()))
    }
}

impl StorageBackend for MemoryStorage {
    fn create_folder(&self, owner: &str, name: &str) -> Result<FolderId, StorageError> {
        let meta = FolderMeta::new(owner, name)?;
        let id = meta.folder_id.clone();
        self.write().folders.insert(id.clone(), meta);
        Ok(id)
    }

    fn folder_info(&self, folder_id: &FolderId) -> Result<FolderInfo, StorageError> {
        Ok(self.read().folder(folder_id)?.info())
    }

    fn list_folders(&self, caller: &str) -> Result<Vec<FolderInfo>, StorageError> {
        let state = self.read();
        let mut out: Vec<FolderInfo> = state
            .folders
            .values()
            .filter(|m| m.access(caller).can_read())
            .map(FolderMeta::info)
            .collect();
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
        let mut state = self.write();
        let folder = state.folder_mut(folder_id)?;
        folder.require_owner(caller, StorageError::AccessDenied)?;
        let entry = folder.add_file(name, mime, content.len() as u64)?;
        state
            .blobs
            .insert(entry.file_id.clone(), (folder_id.clone(), Arc::new(content.to_vec())));
        Ok(entry.file_id)
    }

    fn download(&self, caller: &str, file_id: &FileId) -> Result<Vec<u8>, StorageError> {
        let state = self.read();
        let (folder_id, blob) = state
            .blobs
            .get(file_id)
            .ok_or_else(|| StorageError::UnknownFile(file_id.clone()))?;
        state.folder(folder_id)?.require_read(caller)?;
        Ok(blob.as_ref().clone())
    }

    fn delete(&self, caller: &str, file_id: &FileId) -> Result<(), StorageError> {
        let mut state = self.write();
        let folder_id = state
            .blobs
            .get(file_id)
            .map(|(f, _)| f.clone())
            .ok_or_else(|| StorageError::UnknownFile(file_id.clone()))?;
        let folder = state.folder_mut(&folder_id)?;
        folder.require_owner(caller, StorageError::AccessDenied)?;
        folder.files.retain(|f| &f.file_id != file_id);
        state.blobs.remove(file_id);
        Ok(())
    }

    fn list_folder(&self, folder_id: &FolderId, caller: &str) -> Result<Vec<FileEntry>, StorageError> {
        let state = self.read();
        let folder = state.folder(folder_id)?;
        folder.require_read(caller)?;
        Ok(folder.files.clone())
    }

    fn share_folder(
        &self,
        folder_id: &FolderId,
        grantee_email: &str,
        caller: &str,
    ) -> Result<ShareGrant, StorageError> {
        let mut state = self.write();
        let folder = state.folder_mut(folder_id)?;
        folder.require_owner(caller, StorageError::NotOwner)?;
        Ok(folder.grant(grantee_email)?.0)
    }

    fn grants(&self, folder_id: &FolderId) -> Result<Vec<ShareGrant>, StorageError> {
        Ok(self.read().folder(folder_id)?.grants.clone())
    }

    fn find_by_name(
        &self,
        caller: &str,
        folder_id: &FolderId,
        name: &str,
    ) -> Result<Option<FileId>, StorageError> {
        let state = self.read();
        let folder = state.folder(folder_id)?;
        folder.require_read(caller)?;
        Ok(folder.find_by_name(name))
    }

    fn folder_of(&self, file_id: &FileId) -> Result<FolderId, StorageError> {
        self.read()
            .blobs
            .get(file_id)
            .map(|(f, _)| f.clone())
            .ok_or_else(|| StorageError::UnknownFile(file_id.clone()))
    }
}
