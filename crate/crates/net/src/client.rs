use std::time::Duration;

use cryptosearch_core::ttp::api::*;
use cryptosearch_core::ttp::TtpError;
use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Blocking client for a remote key service.
#[derive(Clone)]
pub struct HttpKeyService {
    base: String,
    http: Client,
}

impl HttpKeyService {
    pub fn new(base_url: &str) -> Result<Self, TtpError> {
        let http = Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(transport)?;
        Ok(HttpKeyService {
            base: base_url.trim_end_matches('/').to_owned(),
            http,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn post<Q: Serialize>(&self, path: &str, token: Option<&str>, body: &Q) -> RequestBuilder {
        let mut rb = self.http.post(self.url(path)).json(body);
        if let Some(t) = token {
            rb = rb.bearer_auth(t);
        }
        rb
    }
}

fn transport(e: reqwest::Error) -> TtpError {
    TtpError::Internal(format!("key service unreachable: {e}"))
}

fn send(rb: RequestBuilder) -> Result<Response, TtpError> {
    let resp = rb.send().map_err(transport)?;
    if resp.status().is_success() {
        return Ok(resp);
    }
    let status = resp.status();
    let text = resp.text().unwrap_or_default();
    match serde_json::from_str::<ErrorBody>(&text) {
        Ok(body) => Err(TtpError::from_wire(&body.error, &body.message)),
        Err(_) => Err(TtpError::Internal(format!("HTTP {status}: {text}"))),
    }
}

fn json<T: DeserializeOwned>(rb: RequestBuilder) -> Result<T, TtpError> {
    send(rb)?
        .json()
        .map_err(|e| TtpError::Internal(format!("malformed response: {e}")))
}

impl KeyService for HttpKeyService {
    fn signup(&self, req: &SignupRequest) -> Result<SignupResponse, TtpError> {
        json(self.post("/signup", None, req))
    }

    fn login(&self, req: &LoginRequest) -> Result<LoginResponse, TtpError> {
        json(self.post("/login", None, req))
    }

    fn setup_keys(&self, token: &str, req: &SetupKeysRequest) -> Result<SetupKeysResponse, TtpError> {
        json(self.post("/keys/setup", Some(token), req))
    }

    fn register_uploads(&self, token: &str, req: &RegisterRequest) -> Result<(), TtpError> {
        let resp = send(self.post("/keys/register", Some(token), req))?;
        if resp.status() != StatusCode::NO_CONTENT {
            log::warn!("register returned {}", resp.status());
        }
        Ok(())
    }

    fn issue_trapdoor(&self, token: &str, req: &TrapdoorRequest) -> Result<TrapdoorResponse, TtpError> {
        json(self.post("/trapdoor", Some(token), req))
    }

    fn release_key(&self, token: &str, req: &ReleaseKeyRequest) -> Result<ReleaseKeyResponse, TtpError> {
        json(self.post("/keys/release", Some(token), req))
    }

    fn user_exists(&self, query: &UserExistsQuery) -> Result<UserExistsResponse, TtpError> {
        json(self.http.get(self.url("/users/exists")).query(query))
    }
}
