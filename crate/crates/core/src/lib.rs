//! Searchable encryption over untrusted storage.
//!
//! A data owner encrypts documents under per-document keys, builds an
//! inverted index keyed by deterministic keyword encryptions, and stores
//! both in a storage backend that only ever sees ciphertext. A trusted key
//! service mints the keys, turns plaintext keywords into trapdoors for
//! authorized users, and releases document keys wrapped under the requesting
//! user's RSA public key.

pub mod crypto;
mod encoding;
pub mod fixture;
pub mod ids;
pub mod index;
pub mod storage;
pub mod ttp;
pub mod workflow;

pub use crypto::{CryptoError, DocumentKey, Iv, PassHash, SecretKey, Trapdoor, WrappedKey};
pub use ids::{FileId, FolderId};
pub use index::{InvertedIndex, KeywordSet, QueryTerm, SearchMode, SearchResult};
pub use storage::{LocalDirStorage, MemoryStorage, StorageBackend, StorageError};
pub use ttp::{KeyService, TtpConfig, TtpError, TtpService};
pub use workflow::{Client, UploadItem, UploadRequest, UserSession, WorkflowConfig, WorkflowError};
