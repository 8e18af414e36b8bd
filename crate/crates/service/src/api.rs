//! JSON-over-HTTP routes, all under `/v1`.
//!
//! | method | path                          | body / query                   |
//! |--------|-------------------------------|--------------------------------|
//! | POST   | `/v1/sessions`                | `{config?, gender?}`           |
//! | GET    | `/v1/sessions/{id}/question`  |                                |
//! | POST   | `/v1/sessions/{id}/answers`   | `{version, answer}`            |
//! | GET    | `/v1/sessions/{id}/result`    | `?beta=`                       |
//! | GET    | `/v1/summary`                 | `?beta=&center=mean\|median`   |
//!
//! Errors are `{"code", "message", "field"}` with `field` null unless the
//! problem is tied to one input.

use std::sync::Arc;

use awareness_core::dataset::{CentralTendency, SummaryOptions, SummaryReport};
use awareness_core::elicitation::{Answer, Gender, Phase, Question, SessionConfig};
use awareness_core::Error as ModelError;
use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::store::{ServiceError, SessionResult, SessionService, Snapshot};

pub const API_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub field: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(
        status: StatusCode,
        code: &str,
        message: impl Into<String>,
        field: Option<String>,
    ) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                field,
            },
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let message = e.to_string();
        match e {
            ServiceError::NotFound(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "session_not_found", message, None)
            }
            ServiceError::VersionConflict { .. } => ApiError::new(
                StatusCode::CONFLICT,
                "version_conflict",
                message,
                Some("version".into()),
            ),
            ServiceError::Model(m) => {
                let (status, field) = match &m {
                    ModelError::InvalidParameter { field, .. } => {
                        (StatusCode::UNPROCESSABLE_ENTITY, Some(field.clone()))
                    }
                    ModelError::AnswerMismatch { .. } => {
                        (StatusCode::UNPROCESSABLE_ENTITY, Some("answer".into()))
                    }
                    ModelError::SessionFinished { .. } | ModelError::SessionNotFinished { .. } => {
                        (StatusCode::CONFLICT, None)
                    }
                    ModelError::DenominatorNonPositive { .. } => {
                        (StatusCode::UNPROCESSABLE_ENTITY, None)
                    }
                    ModelError::Empty(_) => (StatusCode::NOT_FOUND, None),
                };
                ApiError::new(status, m.code(), message, field)
            }
            ServiceError::Storage(_) | ServiceError::CorruptJournal { .. } => ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "storage_error",
                message,
                None,
            ),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "malformed_body",
            r.body_text(),
            None,
        )
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "malformed_query",
            r.body_text(),
            None,
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Finished,
}

/// Response to create, fetch-question and answer calls. Finished sessions
/// carry `result` (the path of their result) instead of `question`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub version: u64,
    pub status: SessionStatus,
    pub phase: Phase,
    pub question: Option<Question>,
    pub result: Option<String>,
}

impl From<Snapshot> for SessionView {
    fn from(s: Snapshot) -> Self {
        let finished = s.phase.is_terminal();
        Self {
            result: finished.then(|| format!("/{API_VERSION}/sessions/{}/result", s.session_id)),
            session_id: s.session_id,
            version: s.version,
            status: if finished {
                SessionStatus::Finished
            } else {
                SessionStatus::Open
            },
            phase: s.phase,
            question: s.question,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub config: Option<SessionConfig>,
    #[serde(default)]
    pub gender: Option<Gender>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitAnswer {
    pub version: u64,
    pub answer: Answer,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ResultQuery {
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct SummaryQuery {
    pub beta: Option<f64>,
    #[serde(default)]
    pub center: CentralTendency,
}

pub fn router(service: Arc<SessionService>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/question", get(get_question))
        .route("/v1/sessions/{id}/answers", post(post_answer))
        .route("/v1/sessions/{id}/result", get(get_result))
        .route("/v1/summary", get(get_summary))
        .fallback(|| async {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "route_not_found",
                "no such route",
                None,
            )
        })
        .with_state(service)
}

async fn create_session(
    State(service): State<Arc<SessionService>>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let request = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| {
            ApiError::new(
                StatusCode::BAD_REQUEST,
                "malformed_body",
                e.to_string(),
                None,
            )
        })?
    };
    let snapshot = service.create(request.config.unwrap_or_default(), request.gender)?;
    Ok((StatusCode::CREATED, Json(snapshot.into())))
}

async fn get_question(
    State(service): State<Arc<SessionService>>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionView>> {
    Ok(Json(service.snapshot(&id)?.into()))
}

async fn post_answer(
    State(service): State<Arc<SessionService>>,
    Path(id): Path<String>,
    body: Result<Json<SubmitAnswer>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let Json(request) = body?;
    Ok(Json(
        service.answer(&id, request.version, request.answer)?.into(),
    ))
}

async fn get_result(
    State(service): State<Arc<SessionService>>,
    Path(id): Path<String>,
    query: Result<Query<ResultQuery>, QueryRejection>,
) -> ApiResult<Json<SessionResult>> {
    let Query(query) = query?;
    Ok(Json(service.result(&id, query.beta)?))
}

async fn get_summary(
    State(service): State<Arc<SessionService>>,
    query: Result<Query<SummaryQuery>, QueryRejection>,
) -> ApiResult<Json<SummaryReport>> {
    let Query(query) = query?;
    let options = SummaryOptions {
        day_columns: query.center,
    };
    Ok(Json(service.summary(query.beta, options)?))
}
