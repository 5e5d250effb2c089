use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

/// Error returned by an API handler; maps onto an HTTP status and a JSON body
/// `{"error": <message>, "field": <name>?}`.
#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown {kind} `{id}`")]
    NotFound { kind: &'static str, id: String },
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    TooLarge(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::InvalidConfig { .. } | ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound { .. } => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::TooLarge(_) => StatusCode::PAYLOAD_TOO_LARGE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<craqreg_core::Error> for ApiError {
    fn from(e: craqreg_core::Error) -> Self {
        match e {
            craqreg_core::Error::InvalidConfig { field, message } => ApiError::InvalidConfig {
                field: field.to_string(),
                message,
            },
            craqreg_core::Error::InvalidPolicy(message) => ApiError::InvalidConfig {
                field: "resize_policy".into(),
                message,
            },
            craqreg_core::Error::Decode { .. }
            | craqreg_core::Error::InvalidImage(_)
            | craqreg_core::Error::AlphaOutOfRange(_) => {
                ApiError::BadRequest(e.to_string())
            }
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = match &self {
            ApiError::InvalidConfig { field, .. } => json!({ "error": self.to_string(), "field": field }),
            _ => json!({ "error": self.to_string() }),
        };
        (self.status(), Json(body)).into_response()
    }
}
