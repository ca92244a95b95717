//! Request/response bodies of the key service and the [`KeyService`] trait
//! that both the in-process service and the HTTP client implement.
//!
//! Every body here is exactly what travels on the wire as JSON.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::TtpError;
use crate::crypto::{PassHash, Trapdoor};
use crate::ids::{FileId, FolderId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SignupRequest {
    pub email: String,
    pub pass_hash: PassHash,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SignupResponse {
    pub email: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoginRequest {
    pub email: String,
    pub passphrase: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoginResponse {
    pub token: String,
    pub email: String,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SetupKeysRequest {
    pub n: u32,
    /// When the folder already has a registered key, that key is returned
    /// instead of a fresh one so later uploads stay searchable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folder_id: Option<FolderId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DocumentKeyDto {
    /// base64 of 32 bytes
    pub key: String,
    pub ref_num: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SetupKeysResponse {
    /// base64 of 48 bytes
    pub secret_key: String,
    pub document_keys: Vec<DocumentKeyDto>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Binding {
    pub file_id: FileId,
    pub ref_num: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegisterRequest {
    pub folder_id: FolderId,
    /// base64 of 48 bytes
    pub secret_key: String,
    pub bindings: Vec<Binding>,
    pub index_file_id: FileId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrapdoorRequest {
    pub folder_id: FolderId,
    pub keyword: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrapdoorResponse {
    pub trapdoor: Trapdoor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReleaseKeyRequest {
    pub file_id: FileId,
    pub public_key_pem: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReleaseKeyResponse {
    /// base64 RSA-OAEP ciphertext
    pub wrapped_key: String,
    pub ref_num: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserExistsQuery {
    pub email: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folder_id: Option<FolderId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserExistsResponse {
    pub registered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl From<&TtpError> for ErrorBody {
    fn from(e: &TtpError) -> Self {
        ErrorBody {
            error: e.code().to_owned(),
            message: e.to_string(),
        }
    }
}

/// The key service as seen by clients. `token` is the bearer session token
/// returned by [`KeyService::login`].
pub trait KeyService: Send + Sync {
    fn signup(&self, req: &SignupRequest) -> Result<SignupResponse, TtpError>;
    fn login(&self, req: &LoginRequest) -> Result<LoginResponse, TtpError>;
    fn setup_keys(&self, token: &str, req: &SetupKeysRequest) -> Result<SetupKeysResponse, TtpError>;
    fn register_uploads(&self, token: &str, req: &RegisterRequest) -> Result<(), TtpError>;
    fn issue_trapdoor(&self, token: &str, req: &TrapdoorRequest) -> Result<TrapdoorResponse, TtpError>;
    fn release_key(&self, token: &str, req: &ReleaseKeyRequest) -> Result<ReleaseKeyResponse, TtpError>;
    fn user_exists(&self, query: &UserExistsQuery) -> Result<UserExistsResponse, TtpError>;
}

impl<T: KeyService + ?Sized> KeyService for std::sync::Arc<T> {
    fn signup(&self, req: &SignupRequest) -> Result<SignupResponse, TtpError> {
        (**self).signup(req)
    }
    fn login(&self, req: &LoginRequest) -> Result<LoginResponse, TtpError> {
        (**self).login(req)
    }
    fn setup_keys(&self, token: &str, req: &SetupKeysRequest) -> Result<SetupKeysResponse, TtpError> {
        (**self).setup_keys(token, req)
    }
    fn register_uploads(&self, token: &str, req: &RegisterRequest) -> Result<(), TtpError> {
        (**self).register_uploads(token, req)
    }
    fn issue_trapdoor(&self, token: &str, req: &TrapdoorRequest) -> Result<TrapdoorResponse, TtpError> {
        (**self).issue_trapdoor(token, req)
    }
    fn release_key(&self, token: &str, req: &ReleaseKeyRequest) -> Result<ReleaseKeyResponse, TtpError> {
        (**self).release_key(token, req)
    }
    fn user_exists(&self, query: &UserExistsQuery) -> Result<UserExistsResponse, TtpError> {
        (**self).user_exists(query)
    }
}
