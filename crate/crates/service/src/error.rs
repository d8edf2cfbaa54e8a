use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::Value;

use flowsmith_core::pipeline::{PipelineError, StoreError};

/// Error body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ApiError {
    pub code: &'static str,
    pub message: String,
    pub http_status: u16,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

/// Every code the service emits, with its status.
pub const ERROR_CODES: &[(&str, u16)] = &[
    ("not-found", 404),
    ("invalid-stage", 409),
    ("busy", 409),
    ("no-workflow", 409),
    ("malformed-body", 422),
    ("validation", 422),
    ("unknown-question", 422),
    ("invalid-workflow", 422),
    ("backend-unavailable", 502),
    ("skeleton-parse", 502),
    ("modification-parse", 502),
    ("prompt", 500),
    ("store", 500),
    ("internal", 500),
];

impl ApiError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        let http_status = ERROR_CODES
            .iter()
            .find(|(c, _)| *c == code)
            .map(|(_, s)| *s)
            .unwrap_or_else(|| panic!("unregistered error code `{code}`"));
        ApiError { code, message: message.into(), http_status, details: None }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn not_found(session_id: &str) -> Self {
        ApiError::new("not-found", format!("no session `{session_id}`"))
    }

    pub fn busy() -> Self {
        ApiError::new("busy", "another operation on this session is in progress")
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new("store", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}
