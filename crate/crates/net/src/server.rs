use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cryptosearch_core::ttp::api::*;
use cryptosearch_core::ttp::TtpError;
use serde::Serialize;
use tokio::sync::oneshot;

type Svc = Arc<dyn KeyService>;

struct ApiError(TtpError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        (status, Json(ErrorBody::from(&self.0))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn bearer(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_owned())
        .filter(|t| !t.is_empty())
        .ok_or(ApiError(TtpError::Unauthenticated))
}

/// Key-service calls hash passphrases and do RSA work, so they run off the
/// async workers.
async fn blocking<T, F>(svc: Svc, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&dyn KeyService) -> Result<T, TtpError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&*svc))
        .await
        .map_err(|e| ApiError(TtpError::Internal(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

fn ok<T: Serialize>(v: T) -> Response {
    Json(v).into_response()
}

async fn signup(State(svc): State<Svc>, Json(req): Json<SignupRequest>) -> ApiResult<Response> {
    let resp = blocking(svc, move |s| s.signup(&req)).await?;
    Ok((StatusCode::CREATED, Json(resp)).into_response())
}

async fn login(State(svc): State<Svc>, Json(req): Json<LoginRequest>) -> ApiResult<Response> {
    blocking(svc, move |s| s.login(&req)).await.map(ok)
}

async fn setup_keys(
    State(svc): State<Svc>,
    headers: HeaderMap,
    Json(req): Json<SetupKeysRequest>,
) -> ApiResult<Response> {
    let token = bearer(&headers)?;
    blocking(svc, move |s| s.setup_keys(&token, &req)).await.map(ok)
}

async fn register(
    State(svc): State<Svc>,
    headers: HeaderMap,
    Json(req): Json<RegisterRequest>,
) -> ApiResult<StatusCode> {
    let token = bearer(&headers)?;
    blocking(svc, move |s| s.register_uploads(&token, &req)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn trapdoor(
    State(svc): State<Svc>,
    headers: HeaderMap,
    Json(req): Json<TrapdoorRequest>,
) -> ApiResult<Response> {
    let token = bearer(&headers)?;
    blocking(svc, move |s| s.issue_trapdoor(&token, &req)).await.map(ok)
}

async fn release(
    State(svc): State<Svc>,
    headers: HeaderMap,
    Json(req): Json<ReleaseKeyRequest>,
) -> ApiResult<Response> {
    let token = bearer(&headers)?;
    blocking(svc, move |s| s.release_key(&token, &req)).await.map(ok)
}

async fn user_exists(State(svc): State<Svc>, Query(q): Query<UserExistsQuery>) -> ApiResult<Response> {
    blocking(svc, move |s| s.user_exists(&q)).await.map(ok)
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(service: Arc<dyn KeyService>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/signup", post(signup))
        .route("/login", post(login))
        .route("/keys/setup", post(setup_keys))
        .route("/keys/register", post(register))
        .route("/trapdoor", post(trapdoor))
        .route("/keys/release", post(release))
        .route("/users/exists", get(user_exists))
        .with_state(service)
}

/// Serves until the process exits.
pub fn serve(addr: SocketAddr, service: Arc<dyn KeyService>) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("key service listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(service)).await
    })
}

/// A server on its own thread and runtime; stops when dropped.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn spawn_background(addr: SocketAddr, service: Arc<dyn KeyService>) -> std::io::Result<ServerHandle> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("key-service".into())
        .spawn(move || {
            rt.block_on(async move {
                let _ = axum::serve(listener, router(service))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        })?;
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
