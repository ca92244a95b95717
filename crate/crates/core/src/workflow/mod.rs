//! Owner and user workflows composed from the key service and storage.
//!
//! [`Client`] holds the two service handles; [`UserSession`] is one logged-in
//! identity. The coarse operations (`owner_upload`, `owner_share`,
//! `user_search`, `user_download`) are built from the fine-grained public
//! steps, which the scenario runner also drives one by one.

pub mod capture;
mod notify;
pub mod scenario;

pub use notify::{CollectingObserver, Notification, NullObserver, Observer, Stage};

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::rngs::OsRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{
    check_passphrase_policy, decrypt_document, encrypt_document, encrypt_keyword,
    generate_rsa_keypair_with_bits, hash_passphrase, unwrap_key, CryptoError, DocumentKey, Iv,
    RsaKeyPair, SecretKey, Trapdoor, WrappedKey, DEFAULT_BCRYPT_COST, RSA_MODULUS_BITS,
};
use crate::encoding::b64_decode;
use crate::ids::{FileId, FolderId};
use crate::index::{IndexError, InvertedIndex, KeywordSet, QueryTerm, SearchMode, SearchResult};
use crate::storage::{normalize_identity, StorageBackend, StorageError};
use crate::ttp::api::*;
use crate::ttp::TtpError;

pub const DEFAULT_INDEX_FILE_NAME: &str = "inverted_index.json";
pub const INDEX_MIME: &str = "application/json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WorkflowConfig {
    pub iv: Iv,
    pub index_file_name: String,
    pub bcrypt_cost: u32,
    /// Modulus size of the per-session RSA pair.
    pub rsa_bits: usize,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        WorkflowConfig {
            iv: Iv::default(),
            index_file_name: DEFAULT_INDEX_FILE_NAME.to_owned(),
            bcrypt_cost: DEFAULT_BCRYPT_COST,
            rsa_bits: RSA_MODULUS_BITS,
        }
    }
}

/// Coarse classification used for exit codes and HTTP mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Auth,
    NotFound,
    AccessDenied,
    Internal,
}

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Ttp(#[from] TtpError),
    #[error(transparent)]
    Storage(StorageError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Index(IndexError),
    #[error("No file found")]
    NoFileFound,
    #[error("folder {0} has no index yet")]
    IndexMissing(FolderId),
    #[error("nothing to upload")]
    EmptyUpload,
    #[error("keywords for {item:?}: {reason}")]
    InvalidKeywords { item: String, reason: String },
    #[error("{0}")]
    InvalidQuery(String),
    #[error("upload of {failed_item:?} failed after {} file(s) were stored: {source}", completed.len())]
    Partial {
        completed: Vec<FileId>,
        failed_item: String,
        source: Box<WorkflowError>,
    },
}

impl From<StorageError> for WorkflowError {
    fn from(e: StorageError) -> Self {
        WorkflowError::Storage(e)
    }
}

impl From<IndexError> for WorkflowError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::NoFileFound => WorkflowError::NoFileFound,
            other => WorkflowError::Index(other),
        }
    }
}

impl WorkflowError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            WorkflowError::Ttp(e) => match e {
                TtpError::UnknownUser(_) | TtpError::IncorrectPassphrase | TtpError::Unauthenticated => {
                    ErrorKind::Auth
                }
                TtpError::AccessDenied | TtpError::NotOwner => ErrorKind::AccessDenied,
                TtpError::UnknownFolder(_) | TtpError::UnknownFile(_) => ErrorKind::NotFound,
                TtpError::DuplicateEmail
                | TtpError::InvalidEmail(_)
                | TtpError::InvalidRequest(_)
                | TtpError::UnknownRefNum(_)
                | TtpError::SecretKeyMismatch
                | TtpError::EmptyKeyword
                | TtpError::KeyFormat(_) => ErrorKind::Usage,
                TtpError::Storage(_) | TtpError::Internal(_) => ErrorKind::Internal,
            },
            WorkflowError::Storage(e) => match e {
                StorageError::AccessDenied | StorageError::NotOwner => ErrorKind::AccessDenied,
                StorageError::UnknownFolder(_) | StorageError::UnknownFile(_) => ErrorKind::NotFound,
                StorageError::InvalidArgument(_) => ErrorKind::Usage,
                StorageError::Io(_) | StorageError::Corrupt(_) => ErrorKind::Internal,
            },
            WorkflowError::Crypto(e) => match e {
                CryptoError::WeakPassphrase(_) | CryptoError::EmptyKeyword | CryptoError::CostRange(_) => {
                    ErrorKind::Usage
                }
                _ => ErrorKind::Internal,
            },
            WorkflowError::Index(IndexError::MalformedIndex(_)) => ErrorKind::Internal,
            WorkflowError::Index(_) => ErrorKind::Usage,
            WorkflowError::NoFileFound | WorkflowError::IndexMissing(_) => ErrorKind::NotFound,
            WorkflowError::EmptyUpload
            | WorkflowError::InvalidKeywords { .. }
            | WorkflowError::InvalidQuery(_) => ErrorKind::Usage,
            WorkflowError::Partial { source, .. } => source.kind(),
        }
    }
}

pub type Result<T, E = WorkflowError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UploadItem {
    pub name: String,
    pub mime: String,
    pub content: Vec<u8>,
    /// Comma-separated keywords; blank stores the file unsearchable.
    pub keywords: String,
}

impl UploadItem {
    pub fn new(name: impl Into<String>, mime: impl Into<String>, content: Vec<u8>, keywords: impl Into<String>) -> Self {
        UploadItem {
            name: name.into(),
            mime: mime.into(),
            content,
            keywords: keywords.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UploadRequest {
    pub folder_id: FolderId,
    pub items: Vec<UploadItem>,
}

/// One matched file, named.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchHit {
    pub keyword: String,
    pub file_id: FileId,
    pub name: String,
}

#[derive(Clone)]
pub struct Client {
    ttp: Arc<dyn KeyService>,
    storage: Arc<dyn StorageBackend>,
    config: WorkflowConfig,
    observer: Arc<dyn Observer>,
}

impl Client {
    pub fn new(ttp: Arc<dyn KeyService>, storage: Arc<dyn StorageBackend>, config: WorkflowConfig) -> Self {
        Client {
            ttp,
            storage,
            config,
            observer: Arc::new(NullObserver),
        }
    }

    pub fn with_observer(mut self, observer: Arc<dyn Observer>) -> Self {
        self.observer = observer;
        self
    }

    pub fn config(&self) -> &WorkflowConfig {
        &self.config
    }

    pub fn ttp(&self) -> &Arc<dyn KeyService> {
        &self.ttp
    }

    pub fn storage(&self) -> &Arc<dyn StorageBackend> {
        &self.storage
    }

    /// Checks the passphrase policy and sends only its bcrypt hash.
    pub fn signup(&self, email: &str, passphrase: &str) -> Result<String> {
        check_passphrase_policy(passphrase)?;
        let pass_hash = hash_passphrase(passphrase, self.config.bcrypt_cost)?;
        let resp = self.ttp.signup(&SignupRequest {
            email: email.to_owned(),
            pass_hash,
        })?;
        Ok(resp.email)
    }

    pub fn login(&self, email: &str, passphrase: &str) -> Result<UserSession> {
        let resp = self.ttp.login(&LoginRequest {
            email: email.to_owned(),
            passphrase: passphrase.to_owned(),
        })?;
        Ok(self.resume(&resp.email, &resp.token))
    }

    /// Session for a token obtained earlier.
    pub fn resume(&self, email: &str, token: &str) -> UserSession {
        UserSession {
            client: self.clone(),
            email: normalize_identity(email),
            token: token.to_owned(),
            keypair: OnceLock::new(),
            index_cache: Mutex::new(HashMap::new()),
            pending_shares: Mutex::new(Vec::new()),
        }
    }
}

pub struct UserSession {
    client: Client,
    email: String,
    token: String,
    keypair: OnceLock<RsaKeyPair>,
    index_cache: Mutex<HashMap<FolderId, (FileId, InvertedIndex)>>,
    pending_shares: Mutex<Vec<(FolderId, String)>>,
}

impl std::fmt::Debug for UserSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UserSession")
            .field("email", &self.email)
            .finish_non_exhaustive()
    }
}

impl UserSession {
    pub fn email(&self) -> &str {
        &self.email
    }

    pub fn token(&self) -> &str {
        &self.token
    }

    pub fn client(&self) -> &Client {
        &self.client
    }

    fn notify(&self, stage: Stage, message: impl Into<String>) {
        self.client.observer.notify(&Notification::new(stage, message));
    }

    fn ttp(&self) -> &dyn KeyService {
        &*self.client.ttp
    }

    fn storage(&self) -> &dyn StorageBackend {
        &*self.client.storage
    }

    /// Uses `pair` instead of generating one on first download.
    pub fn set_keypair(&self, pair: RsaKeyPair) -> bool {
        self.keypair.set(pair).is_ok()
    }

    /// The session's RSA pair, generated on first use.
    pub fn keypair(&self) -> Result<&RsaKeyPair> {
        if let Some(k) = self.keypair.get() {
            return Ok(k);
        }
        let pair = generate_rsa_keypair_with_bits(&mut OsRng, self.client.config.rsa_bits)?;
        let _ = self.keypair.set(pair);
        Ok(self.keypair.get().expect("just set"))
    }

    pub fn create_folder(&self, name: &str) -> Result<FolderId> {
        Ok(self.storage().create_folder(&self.email, name)?)
    }

    // Fine-grained steps.

    pub fn request_keys(&self, n: u32, folder: Option<&FolderId>) -> Result<(SecretKey, Vec<DocumentKey>)> {
        let resp = self.ttp().setup_keys(
            &self.token,
            &SetupKeysRequest {
                n,
                folder_id: folder.cloned(),
            },
        )?;
        let sk = SecretKey::from_base64(&resp.secret_key)?;
        let keys = resp
            .document_keys
            .iter()
            .map(|k| {
                let raw = b64_decode(&k.key).map_err(|e| CryptoError::KeyFormat(e.to_string()))?;
                let key: [u8; 32] = raw.as_slice().try_into().map_err(|_| CryptoError::Length {
                    what: "document key",
                    expected: 32,
                    actual: raw.len(),
                })?;
                DocumentKey::new(key, k.ref_num)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((sk, keys))
    }

    pub fn encrypt_and_upload(
        &self,
        folder: &FolderId,
        name: &str,
        mime: &str,
        plaintext: &[u8],
        key: &DocumentKey,
    ) -> Result<FileId> {
        let ct = encrypt_document(plaintext, key, &self.client.config.iv);
        Ok(self.storage().upload(&self.email, folder, name, mime, &ct)?)
    }

    /// Current index of `folder`, or `None` when it has none.
    pub fn try_fetch_index(&self, folder: &FolderId) -> Result<Option<(FileId, InvertedIndex)>> {
        let name = &self.client.config.index_file_name;
        let Some(id) = self.storage().find_by_name(&self.email, folder, name)? else {
            return Ok(None);
        };
        let mut cache = self.index_cache.lock().unwrap_or_else(|p| p.into_inner());
        if let Some((cached_id, index)) = cache.get(folder) {
            if *cached_id == id {
                return Ok(Some((id, index.clone())));
            }
        }
        let bytes = self.storage().download(&self.email, &id)?;
        let index = InvertedIndex::from_json_bytes(&bytes)?;
        cache.insert(folder.clone(), (id.clone(), index.clone()));
        Ok(Some((id, index)))
    }

    pub fn fetch_index(&self, folder: &FolderId) -> Result<InvertedIndex> {
        self.try_fetch_index(folder)?
            .map(|(_, i)| i)
            .ok_or_else(|| WorkflowError::IndexMissing(folder.clone()))
    }

    /// Replaces the folder's index file and returns the new FileID.
    pub fn upload_index(&self, folder: &FolderId, index: &InvertedIndex) -> Result<FileId> {
        let name = &self.client.config.index_file_name;
        let id = self
            .storage()
            .replace_by_name(&self.email, folder, name, INDEX_MIME, &index.to_json_bytes())?;
        self.index_cache
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(folder.clone(), (id.clone(), index.clone()));
        Ok(id)
    }

    pub fn register(&self, folder: &FolderId, sk: &SecretKey, bindings: Vec<Binding>, index_file_id: FileId) -> Result<()> {
        self.ttp().register_uploads(
            &self.token,
            &RegisterRequest {
                folder_id: folder.clone(),
                secret_key: sk.to_base64(),
                bindings,
                index_file_id,
            },
        )?;
        Ok(())
    }

    pub fn request_trapdoor(&self, folder: &FolderId, keyword: &str) -> Result<Trapdoor> {
        let resp = self.ttp().issue_trapdoor(
            &self.token,
            &TrapdoorRequest {
                folder_id: folder.clone(),
                keyword: keyword.to_owned(),
            },
        )?;
        Ok(resp.trapdoor)
    }

    pub fn fetch_ciphertext(&self, file: &FileId) -> Result<Vec<u8>> {
        Ok(self.storage().download(&self.email, file)?)
    }

    /// Asks for the file's key wrapped under this session's public key and
    /// unwraps it locally.
    pub fn request_key(&self, file: &FileId) -> Result<DocumentKey> {
        let wrapped = self.request_wrapped_key(file)?;
        self.unwrap(&wrapped.0, wrapped.1)
    }

    pub fn request_wrapped_key(&self, file: &FileId) -> Result<(WrappedKey, u64)> {
        let pem = self.keypair()?.public_pem()?;
        let resp = self.ttp().release_key(
            &self.token,
            &ReleaseKeyRequest {
                file_id: file.clone(),
                public_key_pem: pem,
            },
        )?;
        Ok((WrappedKey::from_base64(&resp.wrapped_key)?, resp.ref_num))
    }

    pub fn unwrap(&self, wrapped: &WrappedKey, ref_num: u64) -> Result<DocumentKey> {
        Ok(unwrap_key(wrapped, self.keypair()?.private(), ref_num)?)
    }

    pub fn decrypt(&self, ciphertext: &[u8], key: &DocumentKey) -> Vec<u8> {
        decrypt_document(ciphertext, key, &self.client.config.iv)
    }

    // Coarse operations.

    pub fn owner_upload(&self, req: &UploadRequest) -> Result<Vec<FileId>> {
        if req.items.is_empty() {
            return Err(WorkflowError::EmptyUpload);
        }
        let mut keyword_sets = Vec::with_capacity(req.items.len());
        for item in &req.items {
            if item.keywords.trim().is_empty() {
                log::warn!("{} has no keywords and will not be searchable", item.name);
                keyword_sets.push(None);
                continue;
            }
            let set = KeywordSet::parse(&item.keywords).map_err(|e| WorkflowError::InvalidKeywords {
                item: item.name.clone(),
                reason: e.to_string(),
            })?;
            keyword_sets.push(Some(set));
        }
        let n = u32::try_from(req.items.len()).map_err(|_| WorkflowError::EmptyUpload)?;
        let folder = &req.folder_id;

        let (sk, keys) = self.request_keys(n, Some(folder))?;
        self.notify(Stage::SecretKeyGenerated, "Secret key generated successfully");

        let mut index = self
            .try_fetch_index(folder)?
            .map(|(_, i)| i)
            .unwrap_or_default();

        let mut bindings = Vec::new();
        let mut done = Vec::new();
        let mut failure = None;
        for ((item, set), key) in req.items.iter().zip(&keyword_sets).zip(&keys) {
            let id = match self.encrypt_and_upload(folder, &item.name, &item.mime, &item.content, key) {
                Ok(id) => id,
                Err(e) => {
                    failure = Some((item.name.clone(), e));
                    break;
                }
            };
            self.notify(Stage::FileUploaded, format!("{} uploaded successfully", item.name));
            if let Some(set) = set {
                let trapdoors = set
                    .iter()
                    .map(|k| encrypt_keyword(k, &sk))
                    .collect::<Result<Vec<_>, _>>()?;
                index.add_document(trapdoors.iter(), &id);
            }
            bindings.push(Binding {
                file_id: id.clone(),
                ref_num: key.ref_num(),
                name: Some(item.name.clone()),
            });
            done.push(id);
        }

        if bindings.is_empty() {
            let (name, e) = failure.expect("no bindings implies a failure");
            return Err(WorkflowError::Partial {
                completed: Vec::new(),
                failed_item: name,
                source: Box::new(e),
            });
        }

        let index_id = self.upload_index(folder, &index)?;
        self.notify(Stage::IndexGenerated, "Inverted index generated successfully");
        self.register(folder, &sk, bindings, index_id)?;
        let listed = self.storage().list_folder(folder, &self.email)?;
        self.notify(
            Stage::FilesRetrieved,
            format!("Files retrieved successfully ({} in folder)", listed.len()),
        );

        match failure {
            Some((name, e)) => Err(WorkflowError::Partial {
                completed: done,
                failed_item: name,
                source: Box::new(e),
            }),
            None => Ok(done),
        }
    }

    /// Shares `folder` if `grantee` has an account; otherwise the key service
    /// sends an invite and the share is remembered for
    /// [`retry_pending_shares`](Self::retry_pending_shares).
    pub fn owner_share(&self, folder: &FolderId, grantee: &str) -> Result<bool> {
        let info = self.storage().folder_info(folder)?;
        if info.owner != self.email {
            return Err(StorageError::NotOwner.into());
        }
        let grantee = normalize_identity(grantee);
        let registered = self
            .ttp()
            .user_exists(&UserExistsQuery {
                email: grantee.clone(),
                folder_id: Some(folder.clone()),
            })?
            .registered;
        let mut pending = self.pending_shares.lock().unwrap_or_else(|p| p.into_inner());
        if !registered {
            if !pending.iter().any(|(f, e)| f == folder && *e == grantee) {
                pending.push((folder.clone(), grantee));
            }
            return Ok(false);
        }
        self.storage().share_folder(folder, &grantee, &self.email)?;
        pending.retain(|(f, e)| !(f == folder && *e == grantee));
        drop(pending);
        self.notify(Stage::FileShared, format!("File shared successfully with {grantee}"));
        Ok(true)
    }

    pub fn pending_shares(&self) -> Vec<(FolderId, String)> {
        self.pending_shares.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    /// Re-checks every pending share and completes those whose grantee has
    /// since registered. Returns the completed shares.
    pub fn retry_pending_shares(&self) -> Result<Vec<(FolderId, String)>> {
        let mut done = Vec::new();
        for (folder, email) in self.pending_shares() {
            if self.owner_share(&folder, &email)? {
                done.push((folder, email));
            }
        }
        Ok(done)
    }

    pub fn search_local(&self, index: &InvertedIndex, terms: &[QueryTerm], mode: SearchMode) -> Result<SearchResult> {
        Ok(index.search_with(terms, mode)?)
    }

    pub fn user_search(&self, folder: &FolderId, raw_query: &str) -> Result<SearchResult> {
        self.user_search_with(folder, raw_query, SearchMode::Any)
    }

    pub fn user_search_with(&self, folder: &FolderId, raw_query: &str, mode: SearchMode) -> Result<SearchResult> {
        let keywords = KeywordSet::parse(raw_query).map_err(|e| WorkflowError::InvalidQuery(e.to_string()))?;
        let index = self.fetch_index(folder)?;
        let mut terms = Vec::with_capacity(keywords.len());
        for kw in keywords.iter() {
            let trapdoor = self.request_trapdoor(folder, kw)?;
            self.notify(Stage::TrapdoorIssued, format!("Trapdoor issued for term {}", terms.len() + 1));
            terms.push(QueryTerm::new(kw, trapdoor));
        }
        let result = self.search_local(&index, &terms, mode);
        match &result {
            Ok(r) => self.notify(
                Stage::SearchComplete,
                format!("{} file(s) found", r.file_ids().len()),
            ),
            Err(_) => self.notify(Stage::SearchComplete, "No file found"),
        }
        result
    }

    /// [`user_search`](Self::user_search) with file names attached, one hit
    /// per (keyword, file).
    pub fn search_hits(&self, folder: &FolderId, raw_query: &str) -> Result<Vec<SearchHit>> {
        let result = self.user_search(folder, raw_query)?;
        let names: HashMap<FileId, String> = self
            .storage()
            .list_folder(folder, &self.email)?
            .into_iter()
            .map(|e| (e.file_id, e.name))
            .collect();
        Ok(result
            .matches
            .iter()
            .flat_map(|m| {
                m.file_ids.iter().map(|id| SearchHit {
                    keyword: m.keyword.clone(),
                    file_id: id.clone(),
                    name: names.get(id).cloned().unwrap_or_default(),
                })
            })
            .collect())
    }

    pub fn user_download(&self, file: &FileId) -> Result<Vec<u8>> {
        let ct = self.fetch_ciphertext(file)?;
        let key = self.request_key(file)?;
        self.notify(Stage::KeyReleased, "Decryption key released");
        let plain = self.decrypt(&ct, &key);
        self.notify(Stage::Decrypted, format!("{} bytes decrypted", plain.len()));
        Ok(plain)
    }
}
