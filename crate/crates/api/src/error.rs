use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use setpoint_core::session::SessionError;

/// Error body: `{code, message, field?}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    pub fn with_field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_field", message).with_field(field)
    }

    pub fn session_not_found(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "session_not_found",
            format!("no session {id}"),
        )
    }

    pub fn unauthorized(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", message)
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        match e {
            SessionError::InvalidConfig { field, .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", message)
                    .with_field(field)
            }
            SessionError::Format(_) => {
                Self::new(StatusCode::BAD_REQUEST, "invalid_config", message)
            }
            SessionError::NoOpenRound => Self::new(StatusCode::CONFLICT, "no_open_round", message),
            SessionError::LateReport { .. } => {
                Self::new(StatusCode::CONFLICT, "round_closed", message)
            }
            SessionError::RoundStillOpen { .. } => {
                Self::new(StatusCode::CONFLICT, "round_open", message)
            }
            SessionError::UnknownOccupant(_) => {
                Self::new(StatusCode::NOT_FOUND, "unknown_occupant", message)
            }
            SessionError::Io(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "persistence", message)
            }
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "session_error", message),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        let text = r.body_text();
        match r {
            JsonRejection::JsonDataError(_) => {
                let detail = text
                    .split_once("target type: ")
                    .map_or(text.as_str(), |(_, d)| d);
                let mut err = Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", detail);
                err.field = field_of(detail);
                err
            }
            JsonRejection::MissingJsonContentType(_) => Self::new(
                StatusCode::UNSUPPORTED_MEDIA_TYPE,
                "unsupported_media_type",
                text,
            ),
            _ => Self::new(StatusCode::BAD_REQUEST, "invalid_json", text),
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_query", r.body_text())
    }
}

/// Pull the offending field out of a deserializer message, which reads
/// either `path: message` or `unknown field `name`, ...`.
fn field_of(detail: &str) -> Option<String> {
    if let Some(rest) = detail.split_once("unknown field `").map(|(_, r)| r) {
        return rest.split_once('`').map(|(name, _)| name.to_string());
    }
    let (path, _) = detail.split_once(": ")?;
    (!path.is_empty() && path != "." && !path.contains(' ')).then(|| path.to_string())
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_are_recovered_from_deserializer_messages() {
        assert_eq!(
            field_of("temp_lower: invalid type: string \"x\", expected i32"),
            Some("temp_lower".into())
        );
        assert_eq!(
            field_of("unknown field `colour`, expected one of `a`, `b`"),
            Some("colour".into())
        );
        assert_eq!(field_of("EOF while parsing a value"), None);
    }
}
