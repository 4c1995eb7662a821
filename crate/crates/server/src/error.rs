use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use seedforge_core::session::SessionError;
use seedforge_core::StageError;

/// Error body: `{code, stage, message}` where `code` is the HTTP status.
#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub code: u16,
    pub stage: Option<String>,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub stage: Option<String>,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            stage: None,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }

    pub fn at_stage(mut self, stage: impl Into<String>) -> Self {
        self.stage = Some(stage.into());
        self
    }
}

impl From<StageError> for ApiError {
    fn from(e: StageError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.source.to_string()).at_stage(e.stage.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Stage(s) => s.into(),
            SessionError::NothingToUndo => ApiError::new(StatusCode::CONFLICT, e.to_string()),
            SessionError::Segmentation(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()).at_stage("segmentation")
            }
            SessionError::OutOfBounds { .. }
            | SessionError::Arity { .. }
            | SessionError::EmptyStroke
            | SessionError::UnlabeledStroke => ApiError::bad_request(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.status.as_u16(),
            stage: self.stage,
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}
