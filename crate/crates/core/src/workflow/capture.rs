//! Wire capture: decorators that record every message crossing the client's
//! boundary to the key service or to storage.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::ids::{FileId, FolderId};
use crate::storage::{Access, FileEntry, FolderInfo, ShareGrant, StorageBackend, StorageError};
use crate::ttp::api::*;
use crate::ttp::TtpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Channel {
    Ttp,
    Storage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Request,
    Response,
}

#[derive(Debug, Clone)]
pub struct WireMessage {
    pub seq: usize,
    /// Scenario step active when the message was sent, 0 outside any step.
    pub step: u32,
    pub channel: Channel,
    pub direction: Direction,
    pub op: &'static str,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn contains(&self, needle: &[u8]) -> bool {
        contains_subslice(&self.payload, needle)
    }
}

pub fn contains_subslice(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

#[derive(Clone, Default)]
pub struct WireLog {
    messages: Arc<Mutex<Vec<WireMessage>>>,
    step: Arc<AtomicU32>,
}

impl WireLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_step(&self, step: u32) {
        self.step.store(step, Ordering::SeqCst);
    }

    pub fn record(&self, channel: Channel, direction: Direction, op: &'static str, payload: Vec<u8>) {
        let mut m = self.messages.lock().unwrap_or_else(|p| p.into_inner());
        let seq = m.len();
        m.push(WireMessage {
            seq,
            step: self.step.load(Ordering::SeqCst),
            channel,
            direction,
            op,
            payload,
        });
    }

    pub fn messages(&self) -> Vec<WireMessage> {
        self.messages.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn requests_to(&self, channel: Channel) -> Vec<WireMessage> {
        self.messages()
            .into_iter()
            .filter(|m| m.channel == channel && m.direction == Direction::Request)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.messages.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn json<T: Serialize + ?Sized>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).unwrap_or_default()
}

pub struct RecordingKeyService<K> {
    inner: K,
    log: WireLog,
}

impl<K: KeyService> RecordingKeyService<K> {
    pub fn new(inner: K, log: WireLog) -> Self {
        RecordingKeyService { inner, log }
    }

    fn call<Q: Serialize, R: Serialize>(
        &self,
        op: &'static str,
        req: &Q,
        f: impl FnOnce() -> Result<R, TtpError>,
    ) -> Result<R, TtpError> {
        self.log.record(Channel::Ttp, Direction::Request, op, json(req));
        let out = f();
        let body = match &out {
            Ok(r) => json(r),
            Err(e) => json(&ErrorBody::from(e)),
        };
        self.log.record(Channel::Ttp, Direction::Response, op, body);
        out
    }
}

impl<K: KeyService> KeyService for RecordingKeyService<K> {
    fn signup(&self, req: &SignupRequest) -> Result<SignupResponse, TtpError> {
        self.call("signup", req, || self.inner.signup(req))
    }
    fn login(&self, req: &LoginRequest) -> Result<LoginResponse, TtpError> {
        self.call("login", req, || self.inner.login(req))
    }
    fn setup_keys(&self, token: &str, req: &SetupKeysRequest) -> Result<SetupKeysResponse, TtpError> {
        self.call("setup_keys", req, || self.inner.setup_keys(token, req))
    }
    fn register_uploads(&self, token: &str, req: &RegisterRequest) -> Result<(), TtpError> {
        self.call("register_uploads", req, || self.inner.register_uploads(token, req))
    }
    fn issue_trapdoor(&self, token: &str, req: &TrapdoorRequest) -> Result<TrapdoorResponse, TtpError> {
        self.call("issue_trapdoor", req, || self.inner.issue_trapdoor(token, req))
    }
    fn release_key(&self, token: &str, req: &ReleaseKeyRequest) -> Result<ReleaseKeyResponse, TtpError> {
        self.call("release_key", req, || self.inner.release_key(token, req))
    }
    fn user_exists(&self, query: &UserExistsQuery) -> Result<UserExistsResponse, TtpError> {
        self.call("user_exists", query, || self.inner.user_exists(query))
    }
}

pub struct RecordingStorage<S> {
    inner: S,
    log: WireLog,
}

impl<S: StorageBackend> RecordingStorage<S> {
    pub fn new(inner: S, log: WireLog) -> Self {
        RecordingStorage { inner, log }
    }

    fn call<R>(
        &self,
        op: &'static str,
        request: Vec<u8>,
        f: impl FnOnce() -> Result<R, StorageError>,
        response: impl FnOnce(&R) -> Vec<u8>,
    ) -> Result<R, StorageError> {
        self.log.record(Channel::Storage, Direction::Request, op, request);
        let out = f();
        let body = match &out {
            Ok(r) => response(r),
            Err(e) => e.to_string().into_bytes(),
        };
        self.log.record(Channel::Storage, Direction::Response, op, body);
        out
    }
}

fn debug_bytes<T: std::fmt::Debug>(v: &T) -> Vec<u8> {
    format!("{v:?}").into_bytes()
}

impl<S: StorageBackend> StorageBackend for RecordingStorage<S> {
    fn create_folder(&self, owner: &str, name: &str) -> Result<FolderId, StorageError> {
        self.call(
            "create_folder",
            json(&serde_json::json!({ "owner": owner, "name": name })),
            || self.inner.create_folder(owner, name),
            debug_bytes,
        )
    }

    fn folder_info(&self, folder_id: &FolderId) -> Result<FolderInfo, StorageError> {
        self.call(
            "folder_info",
            json(folder_id),
            || self.inner.folder_info(folder_id),
            json,
        )
    }

    fn list_folders(&self, caller: &str) -> Result<Vec<FolderInfo>, StorageError> {
        self.call("list_folders", json(caller), || self.inner.list_folders(caller), json)
    }

    fn upload(
        &self,
        caller: &str,
        folder_id: &FolderId,
        name: &str,
        mime: &str,
        content: &[u8],
    ) -> Result<FileId, StorageError> {
        let mut req = json(&serde_json::json!({
            "caller": caller, "folderId": folder_id, "name": name, "mime": mime,
        }));
        req.push(b'\n');
        req.extend_from_slice(content);
        self.call(
            "upload",
            req,
            || self.inner.upload(caller, folder_id, name, mime, content),
            json,
        )
    }

    fn download(&self, caller: &str, file_id: &FileId) -> Result<Vec<u8>, StorageError> {
        self.call(
            "download",
            json(&serde_json::json!({ "caller": caller, "fileId": file_id })),
            || self.inner.download(caller, file_id),
            |r| r.clone(),
        )
    }

    fn delete(&self, caller: &str, file_id: &FileId) -> Result<(), StorageError> {
        self.call(
            "delete",
            json(&serde_json::json!({ "caller": caller, "fileId": file_id })),
            || self.inner.delete(caller, file_id),
            |_| Vec::new(),
        )
    }

    fn list_folder(&self, folder_id: &FolderId, caller: &str) -> Result<Vec<FileEntry>, StorageError> {
        self.call(
            "list_folder",
            json(&serde_json::json!({ "caller": caller, "folderId": folder_id })),
            || self.inner.list_folder(folder_id, caller),
            json,
        )
    }

    fn share_folder(
        &self,
        folder_id: &FolderId,
        grantee_email: &str,
        caller: &str,
    ) -> Result<ShareGrant, StorageError> {
        self.call(
            "share_folder",
            json(&serde_json::json!({
                "caller": caller, "folderId": folder_id, "grantee": grantee_email,
            })),
            || self.inner.share_folder(folder_id, grantee_email, caller),
            json,
        )
    }

    fn grants(&self, folder_id: &FolderId) -> Result<Vec<ShareGrant>, StorageError> {
        self.call("grants", json(folder_id), || self.inner.grants(folder_id), json)
    }

    fn find_by_name(
        &self,
        caller: &str,
        folder_id: &FolderId,
        name: &str,
    ) -> Result<Option<FileId>, StorageError> {
        self.call(
            "find_by_name",
            json(&serde_json::json!({ "caller": caller, "folderId": folder_id, "name": name })),
            || self.inner.find_by_name(caller, folder_id, name),
            json,
        )
    }

    fn folder_of(&self, file_id: &FileId) -> Result<FolderId, StorageError> {
        self.call("folder_of", json(file_id), || self.inner.folder_of(file_id), json)
    }

    fn access(&self, folder_id: &FolderId, identity: &str) -> Result<Access, StorageError> {
        self.call(
            "access",
            json(&serde_json::json!({ "folderId": folder_id, "identity": identity })),
            || self.inner.access(folder_id, identity),
            debug_bytes,
        )
    }
}
