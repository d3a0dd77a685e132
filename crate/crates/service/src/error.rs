use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use thiserror::Error;

pub const ERROR_FORMAT: &str = "vdpt.error.v1";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("clinician_prediction is required before model output is shown")]
    MissingClinicianPrediction,
    #[error("invalid clinician_prediction `{0}`; expected survive or die")]
    InvalidClinicianPrediction(String),
    #[error("malformed request: {0}")]
    BadRequest(String),
    #[error("models are not loaded")]
    ModelsUnavailable,
    #[error("record `{0}` not found")]
    NotFound(String),
    #[error("outcome of record `{0}` is already set")]
    OutcomeAlreadySet(String),
    #[error("drift needs at least {needed} records with outcomes, have {have}")]
    InsufficientRecords { needed: usize, have: usize },
    #[error("missing or invalid bearer token")]
    Unauthorized,
    #[error("invalid reference ranges: {0}")]
    InvalidRanges(String),
    #[error("corrupt record log at line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error(transparent)]
    Core(#[from] vdpt_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::MissingClinicianPrediction | ServiceError::InvalidClinicianPrediction(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::ModelsUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::OutcomeAlreadySet(_) | ServiceError::InsufficientRecords { .. } => StatusCode::CONFLICT,
            ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    /// Stable machine-readable tag.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::MissingClinicianPrediction => "missing_clinician_prediction",
            ServiceError::InvalidClinicianPrediction(_) => "invalid_clinician_prediction",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::ModelsUnavailable => "models_unavailable",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::OutcomeAlreadySet(_) => "outcome_already_set",
            ServiceError::InsufficientRecords { .. } => "insufficient_records",
            ServiceError::Unauthorized => "unauthorized",
            ServiceError::InvalidRanges(_) => "invalid_ranges",
            ServiceError::CorruptLog { .. } => "corrupt_log",
            ServiceError::Core(_) => "model_error",
            ServiceError::Io(_) => "io_error",
            ServiceError::Json(_) => "json_error",
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            format: ERROR_FORMAT,
            code: self.code(),
            error: self.to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub format: &'static str,
    pub code: &'static str,
    pub error: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.body())).into_response()
    }
}
