//! JSON-over-HTTP surface of [`Service`].
//!
//! | method | path              | body / result                                  |
//! |--------|-------------------|------------------------------------------------|
//! | POST   | `/upload/prepare` | raw file bytes, `x-uploader-pub` header         |
//! | POST   | `/upload/commit`  | `{candidate_hash, sig_uploader}` → `{block}`   |
//! | GET    | `/file/{cid}`     | file bytes, `x-block-index` header             |
//! | GET    | `/block/{index}`  | block JSON                                     |
//! | GET    | `/chain`          | `{"blocks":[...]}`                             |
//! | GET    | `/verify`         | `{ok, first_failure?}`                         |
//! | GET    | `/health`         | `{ok, backend, store_reachable, chain_length}` |
//!
//! Errors are `{"error", "kind", "role"?}` with the status from
//! [`ServiceError::status`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;

use super::service::{CommitRequest, CommitResponse, Service, ServiceError};
use crate::crypto::{PublicKey, Role};
use crate::store::ContentId;

pub const UPLOADER_HEADER: &str = "x-uploader-pub";
pub const BLOCK_INDEX_HEADER: &str = "x-block-index";
const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

#[derive(Serialize)]
struct ErrorBody {
    error: String,
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    role: Option<Role>,
}

struct ApiError(ServiceError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = ErrorBody { error: self.0.to_string(), kind: self.0.kind(), role: self.0.role() };
        (status, Json(body)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

async fn blocking<T, F>(service: Arc<Service>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&service))
        .await
        .map_err(|e| ApiError(ServiceError::Config(format!("worker task failed: {e}"))))?
        .map_err(ApiError)
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/upload/prepare", post(prepare))
        .route("/upload/commit", post(commit))
        .route("/file/{cid}", get(file))
        .route("/block/{index}", get(block))
        .route("/chain", get(chain))
        .route("/verify", get(verify))
        .route("/health", get(health))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(service)
}

/// Serves until the listener fails or `shutdown` resolves.
pub async fn serve(
    service: Arc<Service>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(service)).with_graceful_shutdown(shutdown).await
}

async fn prepare(State(service): State<Arc<Service>>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let key = headers
        .get(UPLOADER_HEADER)
        .and_then(|v| v.to_str().ok())
        .ok_or_else(|| ServiceError::BadRequest(format!("missing {UPLOADER_HEADER} header")))?;
    let key = PublicKey::from_hex(key).map_err(|e| ServiceError::BadRequest(format!("uploader key: {e}")))?;
    let resp = blocking(service, move |s| s.prepare(&key, &body)).await?;
    Ok(Json(resp).into_response())
}

async fn commit(State(service): State<Arc<Service>>, Json(req): Json<CommitRequest>) -> Result<Response, ApiError> {
    let block = blocking(service, move |s| s.commit(&req.candidate_hash, &req.sig_uploader)).await?;
    Ok(Json(CommitResponse { block }).into_response())
}

async fn file(State(service): State<Arc<Service>>, Path(cid): Path<String>) -> Result<Response, ApiError> {
    let cid = ContentId::new(cid).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let (index, bytes) = blocking(service, move |s| s.file(&cid)).await?;
    let mut resp = bytes.into_response();
    resp.headers_mut().insert(BLOCK_INDEX_HEADER, HeaderValue::from(index));
    Ok(resp)
}

async fn block(State(service): State<Arc<Service>>, Path(index): Path<String>) -> Result<Response, ApiError> {
    let index: u64 = index.parse().map_err(|_| ServiceError::NotFound(format!("block {index}")))?;
    let block = blocking(service, move |s| s.block(index)).await?;
    Ok(Json(block).into_response())
}

async fn chain(State(service): State<Arc<Service>>) -> Result<Response, ApiError> {
    let json = blocking(service, |s| Ok(s.chain_snapshot().to_canonical_json())).await?;
    Ok(([(axum::http::header::CONTENT_TYPE, "application/json")], json).into_response())
}

async fn verify(State(service): State<Arc<Service>>) -> Result<Response, ApiError> {
    let report = blocking(service, |s| Ok(s.verify())).await?;
    Ok(Json(report).into_response())
}

async fn health(State(service): State<Arc<Service>>) -> Result<Response, ApiError> {
    let report = blocking(service, |s| Ok(s.health())).await?;
    Ok(Json(report).into_response())
}
