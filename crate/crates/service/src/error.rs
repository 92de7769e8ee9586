use axum::http::StatusCode;
use prefloop_core::{Error, ErrorClass};
use prefloop_metrics::MetricsError;
use serde_json::{json, Value};

/// Everything the API and CLI can fail with, mapped once to HTTP statuses and
/// process exit codes so both front ends classify errors identically.
#[derive(Debug)]
pub enum ServiceError {
    Core(Error),
    Metrics(MetricsError),
    BadRequest(String),
    Config(String),
}

pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_TOOL: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

impl ServiceError {
    pub fn code(&self) -> &str {
        match self {
            ServiceError::Core(e) => e.code(),
            ServiceError::Metrics(e) => e.code(),
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::Config(_) => "InvalidConfig",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::Core(e) => match e.class() {
                ErrorClass::Validation => StatusCode::BAD_REQUEST,
                ErrorClass::NotFound => StatusCode::NOT_FOUND,
                ErrorClass::Conflict => StatusCode::CONFLICT,
                ErrorClass::Tool => StatusCode::BAD_GATEWAY,
                ErrorClass::Internal => StatusCode::INTERNAL_SERVER_ERROR,
            },
            ServiceError::Metrics(MetricsError::Io(_)) | ServiceError::Config(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::Metrics(_) | ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            ServiceError::Core(e) => match e.class() {
                ErrorClass::Validation | ErrorClass::NotFound | ErrorClass::Conflict => EXIT_VALIDATION,
                ErrorClass::Tool => EXIT_TOOL,
                ErrorClass::Internal => EXIT_INTERNAL,
            },
            ServiceError::Metrics(MetricsError::Io(_)) => EXIT_INTERNAL,
            ServiceError::Metrics(_) | ServiceError::BadRequest(_) | ServiceError::Config(_) => EXIT_VALIDATION,
        }
    }

    pub fn details(&self) -> Value {
        match self {
            ServiceError::Core(e) => e.details(),
            ServiceError::Metrics(MetricsError::JoinFailure { orphans }) => json!({ "orphans": orphans }),
            ServiceError::Metrics(MetricsError::InvalidRow { line, .. }) => json!({ "line": line }),
            _ => json!({}),
        }
    }

    pub fn body(&self) -> Value {
        json!({ "code": self.code(), "message": self.to_string(), "details": self.details() })
    }
}

impl std::fmt::Display for ServiceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ServiceError::Core(e) => e.fmt(f),
            ServiceError::Metrics(e) => e.fmt(f),
            ServiceError::BadRequest(m) => f.write_str(m),
            ServiceError::Config(m) => write!(f, "invalid config: {m}"),
        }
    }
}

impl std::error::Error for ServiceError {}

impl From<Error> for ServiceError {
    fn from(e: Error) -> Self {
        ServiceError::Core(e)
    }
}

impl From<MetricsError> for ServiceError {
    fn from(e: MetricsError) -> Self {
        ServiceError::Metrics(e)
    }
}
