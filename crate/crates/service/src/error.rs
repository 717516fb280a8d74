use alphawealth_core::Error as CoreError;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("instance {0} not found")]
    NotFound(String),
    #[error("no route for {0}")]
    UnknownRoute(String),
    #[error("instance {0} already exists")]
    Duplicate(String),
    #[error("stale sequence number: expected {expected}, current {current}")]
    StaleSequence { expected: u64, current: u64 },
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("journal {path}: line {line}: {reason}")]
    CorruptJournal { path: String, line: usize, reason: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) | ServiceError::UnknownRoute(_) => StatusCode::NOT_FOUND,
            ServiceError::Duplicate(_) | ServiceError::StaleSequence { .. } => StatusCode::CONFLICT,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Core(e) => match e {
                CoreError::Domain(_) | CoreError::InvalidAllocation(_) => StatusCode::BAD_REQUEST,
                CoreError::Infeasible { .. } | CoreError::CapExceeded { .. } => StatusCode::UNPROCESSABLE_ENTITY,
                CoreError::StaleQuote { .. } => StatusCode::CONFLICT,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            },
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    /// Short machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) | ServiceError::UnknownRoute(_) => "not_found",
            ServiceError::Duplicate(_) => "duplicate",
            ServiceError::StaleSequence { .. } => "stale_sequence",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Config(_) => "config",
            ServiceError::CorruptJournal { .. } => "corrupt_journal",
            ServiceError::Core(CoreError::Infeasible { .. }) => "infeasible",
            ServiceError::Core(CoreError::CapExceeded { .. }) => "cap_exceeded",
            ServiceError::Core(CoreError::Domain(_)) => "domain",
            ServiceError::Core(CoreError::StaleQuote { .. }) => "stale_quote",
            ServiceError::Core(_) => "internal",
            ServiceError::Io(_) | ServiceError::Json(_) => "internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.kind(), "message": self.to_string() });
        match &self {
            ServiceError::StaleSequence { current, .. } => body["current_sequence_no"] = json!(current),
            ServiceError::Core(CoreError::Infeasible { max_cost }) => body["max_cost"] = json!(max_cost),
            _ => {}
        }
        if self.status().is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (self.status(), Json(body)).into_response()
    }
}
