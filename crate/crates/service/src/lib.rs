//! HTTP/JSON front end for chart stylization runs.
//!
//! Every operation is blocking image work, so handlers hand it to the
//! blocking pool. Runs that share a state directory are serialized; runs on
//! distinct directories proceed in parallel. The same router also mounts a
//! mock adapter runtime under [`ADAPTER_PREFIX`] so the HTTP adapter backend
//! can be exercised end to end.

mod adapter;
pub mod ops;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use vizstyle_core::api::{
    ApiError, ErrorKind, ErrorResponse, GenerateRequest, InspectQuery, RegenRequest, ValidateRequest, ADAPTER_PREFIX,
    GENERATE_PATH, HEALTH_PATH, INSPECT_PATH, REGEN_PATH, VALIDATE_PATH,
};

pub use adapter::adapter_router;

/// Error wrapper rendered as `{"error": {...}}` with a matching status.
#[derive(Debug)]
pub struct ApiFailure(pub ApiError);

impl From<ApiError> for ApiFailure {
    fn from(e: ApiError) -> Self {
        ApiFailure(e)
    }
}

impl From<JsonRejection> for ApiFailure {
    fn from(e: JsonRejection) -> Self {
        ApiFailure(ApiError::bad_request(e.body_text()))
    }
}

impl From<QueryRejection> for ApiFailure {
    fn from(e: QueryRejection) -> Self {
        ApiFailure(ApiError::bad_request(e.body_text()))
    }
}

impl IntoResponse for ApiFailure {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.kind.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(ErrorResponse { error: self.0 })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiFailure>;

/// Per-directory locks so two requests never write the same run state.
#[derive(Clone, Default)]
struct DirLocks(Arc<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>>);

impl DirLocks {
    fn lock_for(&self, dir: &Path) -> Arc<Mutex<()>> {
        let key = std::path::absolute(dir).unwrap_or_else(|_| dir.to_path_buf());
        let mut map = self.0.lock().unwrap_or_else(|p| p.into_inner());
        map.retain(|_, l| Arc::strong_count(l) > 1);
        map.entry(key).or_default().clone()
    }
}

#[derive(Clone, Default)]
struct AppState {
    locks: DirLocks,
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(result) => result.map(Json).map_err(ApiFailure),
        Err(e) => Err(ApiFailure(ApiError::new(ErrorKind::Io, format!("worker failed: {e}")))),
    }
}

async fn locked<T, F>(state: &AppState, dir: &Path, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    let lock = state.locks.lock_for(dir);
    blocking(move || {
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        f()
    })
    .await
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    version: &'static str,
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok", version: env!("CARGO_PKG_VERSION") })
}

async fn validate(
    body: Result<Json<ValidateRequest>, JsonRejection>,
) -> ApiResult<vizstyle_core::api::ValidateResponse> {
    let Json(req) = body?;
    blocking(move || ops::validate(req)).await
}

async fn generate(
    State(state): State<AppState>,
    body: Result<Json<GenerateRequest>, JsonRejection>,
) -> ApiResult<vizstyle_core::api::GenerateResponse> {
    let Json(req) = body?;
    tracing::info!(state_dir = %req.state_dir.display(), "generate");
    let dir = req.state_dir.clone();
    locked(&state, &dir, move || ops::generate(req)).await
}

async fn regen(
    State(state): State<AppState>,
    body: Result<Json<RegenRequest>, JsonRejection>,
) -> ApiResult<vizstyle_core::api::RegenResponse> {
    let Json(req) = body?;
    tracing::info!(state_dir = %req.state_dir.display(), target = ?req.target, "regen");
    let dir = req.state_dir.clone();
    locked(&state, &dir, move || ops::regen(req)).await
}

async fn inspect(
    State(state): State<AppState>,
    query: Result<Query<InspectQuery>, QueryRejection>,
) -> ApiResult<vizstyle_core::api::InspectResponse> {
    let Query(q) = query?;
    let dir = q.state_dir.clone();
    locked(&state, &dir, move || ops::inspect(q)).await
}

/// The full service: operations, health check and the mock adapter.
pub fn router() -> Router {
    Router::new()
        .route(HEALTH_PATH, get(health))
        .route(VALIDATE_PATH, post(validate))
        .route(GENERATE_PATH, post(generate))
        .route(REGEN_PATH, post(regen))
        .route(INSPECT_PATH, get(inspect))
        .with_state(AppState::default())
        .nest(ADAPTER_PREFIX, adapter_router())
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router()).await
}

/// Binds `addr` (port 0 picks a free port) and serves in the background.
pub async fn spawn(addr: SocketAddr) -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((local, tokio::spawn(serve(listener))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_lock_per_directory() {
        let locks = DirLocks::default();
        let a = locks.lock_for(Path::new("/tmp/a"));
        let a2 = locks.lock_for(Path::new("/tmp/a"));
        let b = locks.lock_for(Path::new("/tmp/b"));
        assert!(Arc::ptr_eq(&a, &a2));
        assert!(!Arc::ptr_eq(&a, &b));
        drop((a, a2, b));
        locks.lock_for(Path::new("/tmp/c"));
        assert_eq!(locks.0.lock().unwrap().len(), 1, "idle locks are pruned");
    }

    #[test]
    fn error_status_follows_kind() {
        let resp = ApiFailure(ApiError::not_found("x")).into_response();
        assert_eq!(resp.status(), StatusCode::NOT_FOUND);
        let resp = ApiFailure(ApiError::new(ErrorKind::Backend, "x")).into_response();
        assert_eq!(resp.status(), StatusCode::BAD_GATEWAY);
    }
}
