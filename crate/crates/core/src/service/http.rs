use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

use super::{AnnotationService, Condition, ServiceError, Submission};
use crate::decision::Decision;

#[derive(Deserialize)]
struct CreateSession {
    annotator_id: String,
    group_id: String,
    condition: Condition,
}

#[derive(Deserialize)]
struct FinalDecision {
    decision: Decision,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::QuotaFilled { .. } => "quota_filled",
            ServiceError::UnknownGroup(_) => "unknown_group",
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::UnknownCase(_) => "unknown_case",
            ServiceError::SessionClosed(_) => "session_closed",
            ServiceError::IncompleteVerdicts { .. } => "incomplete_verdicts",
            ServiceError::OutOfOrder(_) => "out_of_order",
            ServiceError::ConflictingResubmission(_) => "conflicting_resubmission",
            ServiceError::InvalidDecisionVariant { .. } => "invalid_decision_variant",
            ServiceError::ConditionUnavailable(_) => "condition_unavailable",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Data(_) | ServiceError::Log(_) => "internal",
        }
    }

    fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownGroup(_) | ServiceError::UnknownSession(_) | ServiceError::UnknownCase(_) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::QuotaFilled { .. }
            | ServiceError::OutOfOrder(_)
            | ServiceError::ConflictingResubmission(_) => StatusCode::CONFLICT,
            ServiceError::SessionClosed(_) => StatusCode::GONE,
            ServiceError::IncompleteVerdicts { .. }
            | ServiceError::InvalidDecisionVariant { .. }
            | ServiceError::ConditionUnavailable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Data(_) | ServiceError::Log(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let body = serde_json::json!({ "error": self.code(), "message": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}

type Shared = State<Arc<AnnotationService>>;

async fn create_session(State(svc): Shared, Json(req): Json<CreateSession>) -> Result<Response, ServiceError> {
    let view = svc.create_session(&req.annotator_id, &req.group_id, req.condition)?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn get_session(State(svc): Shared, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(svc.session(&id)?).into_response())
}

async fn next_task(State(svc): Shared, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(svc.next_task(&id)?).into_response())
}

async fn submit_selection(
    State(svc): Shared,
    Path((id, case_id)): Path<(String, String)>,
    Json(submission): Json<Submission>,
) -> Result<Response, ServiceError> {
    Ok(Json(svc.submit_selection(&id, &case_id, &submission)?).into_response())
}

async fn submit_decision(
    State(svc): Shared,
    Path((id, case_id)): Path<(String, String)>,
    Json(req): Json<FinalDecision>,
) -> Result<Response, ServiceError> {
    Ok(Json(svc.submit_final_decision(&id, &case_id, req.decision)?).into_response())
}

async fn results(State(svc): Shared, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(svc.results(&id)?).into_response())
}

/// The JSON API, plus the UI bundle at `/` when a static directory is set.
pub fn router(svc: Arc<AnnotationService>) -> Router {
    let static_dir = svc.config().static_dir.clone();
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/next", get(next_task))
        .route("/sessions/{id}/cases/{cid}/selection", post(submit_selection))
        .route("/sessions/{id}/cases/{cid}/decision", post(submit_decision))
        .route("/sessions/{id}/results", get(results))
        .with_state(svc);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `0.0.0.0:port` and serves until the process is stopped.
pub async fn serve(svc: Arc<AnnotationService>, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    tracing::info!(addr = %listener.local_addr()?, "annotation service listening");
    axum::serve(listener, router(svc)).await
}
