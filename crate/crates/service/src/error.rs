use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use planexplain_core::api::ErrorBody;
use planexplain_core::Error;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_params", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "out_of_order", message)
    }

    /// Maps a core error; `invalid` decides the status of argument errors
    /// (400 for uploads, 422 for stage parameters).
    pub fn from_core(e: Error, invalid: StatusCode) -> Self {
        let message = e.to_string();
        match e {
            Error::Stage(_) => Self::conflict(message),
            Error::MissingKnowledge(_) => Self::not_found(message),
            Error::Backend(_) => Self::new(StatusCode::BAD_GATEWAY, "backend", message),
            Error::InvalidArgument(_) if invalid == StatusCode::UNPROCESSABLE_ENTITY => Self::unprocessable(message),
            Error::InvalidArgument(_)
            | Error::Parse { .. }
            | Error::Schema(_)
            | Error::DuplicatePlan(_)
            | Error::MalformedTerm(_)
            | Error::InvalidInterval(_) => Self::bad_request(message),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(status = %self.status, "{}", self.message);
        }
        let body = ErrorBody {
            error: self.message,
            kind: self.kind.to_string(),
        };
        (self.status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
