use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use deformlab::energies::EnergyBreakdown;
use deformlab::mesh::ConstraintFile;
use deformlab::solver::{SolveError, SolverConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::session::{mesh_from_body, to_arrays, ConfigUpdate, Session, SessionSummary, StateSnapshot};
use crate::{AppState, SessionHandle};

/// Largest `steps` accepted by one iterate call.
pub const MAX_STEPS_PER_CALL: usize = 10_000;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown session {0}")]
    NotFound(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<SolveError> for ApiError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::NoConstraints | SolveError::Factor(_) => ApiError::Conflict(e.to_string()),
            SolveError::NonFinite { .. } | SolveError::StaleFactorization => ApiError::Internal(e.to_string()),
            _ => ApiError::Unprocessable(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

pub(crate) async fn lookup(state: &AppState, id: &str) -> Result<SessionHandle, ApiError> {
    state.sessions.read().await.get(id).cloned().ok_or_else(|| ApiError::NotFound(id.to_string()))
}

/// Runs `f` on the session off the async executor, holding its lock.
async fn with_session<T: Send + 'static>(
    handle: SessionHandle,
    f: impl FnOnce(&mut Session) -> T + Send + 'static,
) -> Result<T, ApiError> {
    let mut guard = handle.lock_owned().await;
    tokio::task::spawn_blocking(move || f(&mut guard)).await.map_err(|e| ApiError::Internal(e.to_string()))
}

pub async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let id = state.next_id();
    let session = tokio::task::spawn_blocking(move || {
        let mesh = mesh_from_body(&body)?;
        Session::new(id, mesh)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
    .map_err(ApiError::Unprocessable)?;
    let summary = session.summary();
    state.insert(session).await;
    Ok((StatusCode::CREATED, Json(summary)))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionInfo {
    #[serde(flatten)]
    pub summary: SessionSummary,
    pub iteration: usize,
    pub config: SolverConfig,
    pub constraints: ConstraintFile,
    pub factored: bool,
}

pub async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionInfo>, ApiError> {
    let handle = lookup(&state, &id).await?;
    let s = handle.lock().await;
    Ok(Json(SessionInfo {
        summary: s.summary(),
        iteration: s.iteration(),
        config: *s.config(),
        constraints: s.constraints().clone(),
        factored: s.has_factorization(),
    }))
}

pub async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    match state.sessions.write().await.remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::NotFound(id)),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MeshGeometry {
    pub positions: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

pub async fn get_mesh(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<MeshGeometry>, ApiError> {
    let handle = lookup(&state, &id).await?;
    let s = handle.lock().await;
    Ok(Json(MeshGeometry { positions: to_arrays(s.mesh().positions()), faces: s.mesh().faces().to_vec() }))
}

pub async fn get_state(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<StateSnapshot>, ApiError> {
    let handle = lookup(&state, &id).await?;
    let s = handle.lock().await;
    Ok(Json(s.snapshot()))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EditResponse {
    pub revision: u64,
    /// The cached factorization was dropped by this edit.
    pub refactored: bool,
}

pub async fn put_constraints(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<EditResponse>, ApiError> {
    let file: ConstraintFile =
        serde_json::from_slice(&body).map_err(|e| ApiError::Unprocessable(format!("bad constraint file: {e}")))?;
    let handle = lookup(&state, &id).await?;
    let mut s = handle.lock().await;
    let refactored = s.set_constraints(file).map_err(ApiError::Unprocessable)?;
    Ok(Json(EditResponse { revision: s.revision(), refactored }))
}

pub async fn put_config(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<EditResponse>, ApiError> {
    let update: ConfigUpdate =
        serde_json::from_slice(&body).map_err(|e| ApiError::Unprocessable(format!("bad config: {e}")))?;
    let handle = lookup(&state, &id).await?;
    let mut s = handle.lock().await;
    let refactored = s.update_config(update).map_err(|e| ApiError::Unprocessable(e.to_string()))?;
    Ok(Json(EditResponse { revision: s.revision(), refactored }))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterateRequest {
    pub steps: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "camelCase")]
pub struct IterateResponse {
    pub revision: u64,
    pub iteration: usize,
    pub positions: Vec<[f64; 3]>,
    pub energy: EnergyBreakdown,
    /// The system had to be factored during this call.
    pub refactored: bool,
}

pub async fn iterate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<IterateResponse>, ApiError> {
    let req: IterateRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::Unprocessable(format!("bad iterate request: {e}")))?;
    if req.steps > MAX_STEPS_PER_CALL {
        return Err(ApiError::Unprocessable(format!("steps must not exceed {MAX_STEPS_PER_CALL}")));
    }
    let handle = lookup(&state, &id).await?;
    with_session(handle, move |s| -> Result<_, ApiError> {
        let advance = s.advance(req.steps)?;
        Ok(IterateResponse {
            revision: s.revision(),
            iteration: s.iteration(),
            positions: to_arrays(s.positions()),
            energy: advance.energy,
            refactored: advance.refactored,
        })
    })
    .await?
    .map(Json)
}
