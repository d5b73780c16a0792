//! HTTP session service: participants play the threshold bandit task through
//! a browser while every choice is recorded with its server-side features.
//!
//! Routes:
//!
//! - `POST /sessions` with `{"experiment": 1|2, "seed": n?}`
//! - `POST /sessions/{id}/choices` with `{"index": i, "seq": n?}`
//! - `GET /sessions/{id}/records` (line-delimited JSON records)
//! - `GET /sessions/{id}/state`

pub mod api;
mod store;

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use safelab_core::records::write_records;
use tower_http::services::ServeDir;

pub use store::{Session, SessionStore};

use api::{ChoiceOutcome, CreateSession, ErrorBody, SessionView, SubmitChoice};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<safelab_core::Error> for ServiceError {
    fn from(e: safelab_core::Error) -> Self {
        match e {
            safelab_core::Error::InvalidInput(m) => ServiceError::BadRequest(m),
            safelab_core::Error::InvalidState(m) => ServiceError::Conflict(m),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

impl From<JsonRejection> for ServiceError {
    fn from(e: JsonRejection) -> Self {
        ServiceError::BadRequest(e.body_text())
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if let ServiceError::Internal(m) = &self {
            tracing::error!("{m}");
        }
        (self.status(), Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

type Shared = Arc<SessionStore>;

/// Run CPU-bound session work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

async fn create_session(
    State(store): State<Shared>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ServiceError> {
    let Json(req) = body?;
    let view = blocking(move || store.create(req.experiment, req.seed)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn submit_choice(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<SubmitChoice>, JsonRejection>,
) -> Result<Json<ChoiceOutcome>, ServiceError> {
    let Json(req) = body?;
    Ok(Json(blocking(move || store.submit(&id, req.index, req.seq)).await?))
}

async fn session_state(State(store): State<Shared>, Path(id): Path<String>) -> Result<Json<SessionView>, ServiceError> {
    Ok(Json(store.state(&id)?))
}

async fn session_records(State(store): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let records = store.records(&id)?;
    let mut body = Vec::new();
    write_records(&mut body, &records)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(store: Shared, static_dir: Option<PathBuf>) -> Router {
    let app = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/choices", post(submit_choice))
        .route("/sessions/{id}/records", get(session_records))
        .route("/sessions/{id}/state", get(session_state))
        .with_state(store);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}
