use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;

use crate::jobs::JobState;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown job `{0}`")]
    UnknownJob(String),
    #[error("unknown electrode `{0}`")]
    UnknownElectrode(String),
    #[error("job `{id}` is {state}, results are only available once it is done")]
    NotDone { id: String, state: JobState },
    #[error("{0}")]
    BadQuery(String),
    #[error("{0}")]
    MalformedConfig(String),
    #[error("{0}")]
    InvalidConfig(String),
    #[error("job queue is full, retry later")]
    QueueFull,
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownJob(_) | ApiError::UnknownElectrode(_) => StatusCode::NOT_FOUND,
            ApiError::NotDone { .. } => StatusCode::CONFLICT,
            ApiError::BadQuery(_) | ApiError::MalformedConfig(_) => StatusCode::BAD_REQUEST,
            ApiError::InvalidConfig(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::QueueFull => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}
