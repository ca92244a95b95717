//! The trusted key service.
//!
//! It holds every key in the system: per-folder secret keys, per-document
//! keys and the user registry. Owners obtain keys from it before uploading
//! and register the resulting FileIDs afterwards. Users never see a folder's
//! secret key; they ask the service for trapdoors, and for document keys
//! wrapped under an RSA public key of their own.

pub mod api;
mod outbox;
mod registry;
mod service;

pub use api::KeyService;
pub use outbox::{Invite, Outbox, INVITE_SUBJECT};
pub use registry::{
    FileInfoView, FileRecord, FolderKeyRecord, KeyAllocation, RegistryState, RegistryStore,
    UidCounter, UserRecord,
};
pub use service::{Session, TtpService};

use std::time::Duration;

use thiserror::Error;

use crate::crypto::CryptoError;
use crate::ids::{FileId, FolderId};
use crate::storage::StorageError;

pub const INCORRECT_PASSPHRASE: &str = "Incorrect Passphrase Provided";
pub const DUPLICATE_EMAIL: &str = "email id already exists";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TtpError {
    #[error("email id already exists")]
    DuplicateEmail,
    #[error("{0}")]
    InvalidEmail(String),
    #[error("{0}")]
    UnknownUser(String),
    #[error("Incorrect Passphrase Provided")]
    IncorrectPassphrase,
    #[error("authentication required")]
    Unauthenticated,
    #[error("{0}")]
    InvalidRequest(String),
    #[error("{0}")]
    UnknownRefNum(String),
    #[error("secret key does not match the folder's key")]
    SecretKeyMismatch,
    #[error("only the folder owner may do this")]
    NotOwner,
    #[error("access denied")]
    AccessDenied,
    #[error("{0}")]
    UnknownFolder(String),
    #[error("{0}")]
    UnknownFile(String),
    #[error("keyword is empty")]
    EmptyKeyword,
    #[error("{0}")]
    KeyFormat(String),
    #[error("{0}")]
    Storage(String),
    #[error("{0}")]
    Internal(String),
}

impl TtpError {
    pub fn unknown_user(email: &str) -> Self {
        TtpError::UnknownUser(format!("no account for {email}"))
    }

    pub fn unknown_folder(id: &FolderId) -> Self {
        TtpError::UnknownFolder(format!("unknown folder {id}"))
    }

    pub fn unknown_file(id: &FileId) -> Self {
        TtpError::UnknownFile(format!("unknown file {id}"))
    }

    pub fn unknown_ref_num(n: u64) -> Self {
        TtpError::UnknownRefNum(format!("reference number {n} was not allocated to this user"))
    }

    /// Stable machine-readable code used in error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            TtpError::DuplicateEmail => "DUPLICATE_EMAIL",
            TtpError::InvalidEmail(_) => "INVALID_EMAIL",
            TtpError::UnknownUser(_) => "UNKNOWN_USER",
            TtpError::IncorrectPassphrase => "INCORRECT_PASSPHRASE",
            TtpError::Unauthenticated => "UNAUTHENTICATED",
            TtpError::InvalidRequest(_) => "INVALID_REQUEST",
            TtpError::UnknownRefNum(_) => "UNKNOWN_REF_NUM",
            TtpError::SecretKeyMismatch => "SECRET_KEY_MISMATCH",
            TtpError::NotOwner => "NOT_OWNER",
            TtpError::AccessDenied => "ACCESS_DENIED",
            TtpError::UnknownFolder(_) => "UNKNOWN_FOLDER",
            TtpError::UnknownFile(_) => "UNKNOWN_FILE",
            TtpError::EmptyKeyword => "EMPTY_KEYWORD",
            TtpError::KeyFormat(_) => "KEY_FORMAT",
            TtpError::Storage(_) => "STORAGE",
            TtpError::Internal(_) => "INTERNAL",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            TtpError::DuplicateEmail => 409,
            TtpError::UnknownUser(_) | TtpError::IncorrectPassphrase | TtpError::Unauthenticated => 401,
            TtpError::NotOwner | TtpError::AccessDenied => 403,
            TtpError::UnknownFolder(_) | TtpError::UnknownFile(_) => 404,
            TtpError::InvalidEmail(_)
            | TtpError::InvalidRequest(_)
            | TtpError::UnknownRefNum(_)
            | TtpError::SecretKeyMismatch
            | TtpError::EmptyKeyword
            | TtpError::KeyFormat(_) => 400,
            TtpError::Storage(_) => 502,
            TtpError::Internal(_) => 500,
        }
    }

    /// Rebuilds an error from an `{error, message}` body.
    pub fn from_wire(code: &str, message: &str) -> Self {
        let m = message.to_owned();
        match code {
            "DUPLICATE_EMAIL" => TtpError::DuplicateEmail,
            "INVALID_EMAIL" => TtpError::InvalidEmail(m),
            "UNKNOWN_USER" => TtpError::UnknownUser(m),
            "INCORRECT_PASSPHRASE" => TtpError::IncorrectPassphrase,
            "UNAUTHENTICATED" => TtpError::Unauthenticated,
            "INVALID_REQUEST" => TtpError::InvalidRequest(m),
            "UNKNOWN_REF_NUM" => TtpError::UnknownRefNum(m),
            "SECRET_KEY_MISMATCH" => TtpError::SecretKeyMismatch,
            "NOT_OWNER" => TtpError::NotOwner,
            "ACCESS_DENIED" => TtpError::AccessDenied,
            "UNKNOWN_FOLDER" => TtpError::UnknownFolder(m),
            "UNKNOWN_FILE" => TtpError::UnknownFile(m),
            "EMPTY_KEYWORD" => TtpError::EmptyKeyword,
            "KEY_FORMAT" => TtpError::KeyFormat(m),
            "STORAGE" => TtpError::Storage(m),
            _ => TtpError::Internal(format!("{code}: {m}")),
        }
    }
}

impl From<CryptoError> for TtpError {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::EmptyKeyword => TtpError::EmptyKeyword,
            CryptoError::KeyFormat(m) => TtpError::KeyFormat(m),
            CryptoError::MalformedHash => TtpError::InvalidRequest("malformed passphrase hash".into()),
            CryptoError::Length { .. } | CryptoError::InvalidTrapdoor(_) => TtpError::KeyFormat(e.to_string()),
            other => TtpError::Internal(other.to_string()),
        }
    }
}

impl From<StorageError> for TtpError {
    fn from(e: StorageError) -> Self {
        match e {
            StorageError::UnknownFolder(id) => TtpError::unknown_folder(&id),
            StorageError::UnknownFile(id) => TtpError::unknown_file(&id),
            StorageError::AccessDenied => TtpError::AccessDenied,
            StorageError::NotOwner => TtpError::NotOwner,
            other => TtpError::Storage(other.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TtpConfig {
    pub session_ttl: Duration,
    /// Smallest RSA modulus accepted by `release_key`.
    pub min_rsa_bits: usize,
    /// Label mixed into every secret-key derivation.
    pub key_label: String,
    /// Largest `n` accepted by `setup_keys`.
    pub max_keys_per_setup: u32,
}

impl Default for TtpConfig {
    fn default() -> Self {
        TtpConfig {
            session_ttl: Duration::from_secs(12 * 60 * 60),
            min_rsa_bits: crate::crypto::RSA_MODULUS_BITS,
            key_label: "cryptosearch-v1".to_owned(),
            max_keys_per_setup: 10_000,
        }
    }
}

/// Accepts `local@domain.tld`-shaped addresses.
pub fn validate_email(email: &str) -> Result<String, TtpError> {
    let email = crate::storage::normalize_identity(email);
    let bad = || TtpError::InvalidEmail(format!("invalid email address {email:?}"));
    let (local, domain) = email.split_once('@').ok_or_else(bad)?;
    if local.is_empty()
        || domain.contains('@')
        || email.chars().any(char::is_whitespace)
        || !domain.contains('.')
        || domain.split('.').any(str::is_empty)
    {
        return Err(bad());
    }
    Ok(email)
}
