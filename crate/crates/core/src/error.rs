use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::TaskKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which half of the quality evaluator failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStage {
    Vqa,
    Judge,
}

impl fmt::Display for EvalStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalStage::Vqa => f.write_str("vqa"),
            EvalStage::Judge => f.write_str("judge"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("score {value} is outside [0, 100]")]
    OutOfRange { value: f64 },

    #[error("unknown task kind {0:?}")]
    UnknownTask(String),

    #[error("media mismatch for {task}: {reason}")]
    MediaMismatch { task: TaskKind, reason: String },

    #[error("could not determine the generation task from the prompt")]
    AmbiguousTask,

    #[error("bootstrap requires at least one sample")]
    EmptyBootstrap,

    #[error("bootstrap accepts at most {cap} samples, got {got}")]
    TooManySamples { cap: usize, got: usize },

    #[error("invalid tool descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("no tool registered; probed {}", .probes.join(" -> "))]
    ToolNotFound { probes: Vec<String> },

    #[error("request kind {request} does not match tool kind {tool}")]
    KindMismatch { tool: String, request: String },

    #[error("tool {tool_id} failed after {attempts} attempt(s){}: {cause}", .stage.map(|s| format!(" in {s} stage")).unwrap_or_default())]
    ToolFailure {
        tool_id: String,
        stage: Option<EvalStage>,
        attempts: u32,
        cause: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("record id {0} already exists")]
    DuplicateId(String),

    #[error("no generated record with result id {0}")]
    UnknownResult(String),

    #[error("result {0} already carries a user score")]
    AlreadyScored(String),

    #[error("unknown session {0}")]
    UnknownSession(String),

    #[error("storage failure: {0}")]
    Storage(String),
}

impl Error {
    /// Stable machine-readable code used in HTTP error bodies and CLI output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::OutOfRange { .. } => "OutOfRange",
            Error::UnknownTask(_) => "UnknownTask",
            Error::MediaMismatch { .. } => "MediaMismatch",
            Error::AmbiguousTask => "AmbiguousTask",
            Error::EmptyBootstrap => "EmptyBootstrap",
            Error::TooManySamples { .. } => "TooManySamples",
            Error::InvalidDescriptor(_) => "InvalidDescriptor",
            Error::ToolNotFound { .. } => "ToolNotFound",
            Error::KindMismatch { .. } => "KindMismatch",
            Error::ToolFailure { .. } => "ToolFailure",
            Error::Precondition(_) => "Precondition",
            Error::Invalid(_) => "Invalid",
            Error::DuplicateId(_) => "DuplicateId",
            Error::UnknownResult(_) => "UnknownResult",
            Error::AlreadyScored(_) => "AlreadyScored",
            Error::UnknownSession(_) => "UnknownSession",
            Error::Storage(_) => "StorageFailure",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::OutOfRange { .. }
            | Error::UnknownTask(_)
            | Error::MediaMismatch { .. }
            | Error::AmbiguousTask
            | Error::EmptyBootstrap
            | Error::TooManySamples { .. }
            | Error::InvalidDescriptor(_)
            | Error::KindMismatch { .. }
            | Error::Precondition(_)
            | Error::Invalid(_) => ErrorClass::Validation,
            Error::UnknownResult(_) | Error::UnknownSession(_) => ErrorClass::NotFound,
            Error::DuplicateId(_) | Error::AlreadyScored(_) => ErrorClass::Conflict,
            Error::ToolNotFound { .. } | Error::ToolFailure { .. } => ErrorClass::Tool,
            Error::Storage(_) => ErrorClass::Internal,
        }
    }

    pub fn details(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            Error::OutOfRange { value } => json!({ "value": value }),
            Error::MediaMismatch { task, .. } => json!({ "task": task }),
            Error::TooManySamples { cap, got } => json!({ "cap": cap, "got": got }),
            Error::ToolNotFound { probes } => json!({ "probes": probes }),
            Error::ToolFailure {
                tool_id,
                stage,
                attempts,
                ..
            } => json!({ "tool_id": tool_id, "stage": stage, "attempts": attempts }),
            Error::DuplicateId(id) | Error::UnknownResult(id) | Error::AlreadyScored(id) => {
                json!({ "id": id })
            }
            Error::UnknownSession(id) => json!({ "session_id": id }),
            _ => json!({}),
        }
    }
}

/// Coarse grouping of errors, shared by the HTTP status mapping and CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    NotFound,
    Conflict,
    Tool,
    Internal,
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Storage(err.to_string())
    }
}
