use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("no checkpoint loaded")]
    Unavailable,
    #[error("unknown label `{label}`")]
    UnknownLabel { label: String, vocabulary: Vec<String> },
    #[error("unknown style `{style}`")]
    UnknownStyle { style: String, styles: Vec<String> },
    #[error("cannot decode image: {0}")]
    BadImage(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn internal(e: impl std::fmt::Display) -> Self {
        ApiError::Internal(e.to_string())
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::UnknownLabel { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::UnknownStyle { .. } => StatusCode::NOT_FOUND,
            ApiError::BadImage(_) | ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.to_string() });
        match &self {
            ApiError::UnknownLabel { vocabulary, .. } => body["vocabulary"] = json!(vocabulary),
            ApiError::UnknownStyle { styles, .. } => body["styles"] = json!(styles),
            ApiError::Internal(msg) => log::error!("request failed: {msg}"),
            _ => {}
        }
        (self.status(), Json(body)).into_response()
    }
}
