use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("series lengths differ: predicted {predicted}, observed {observed}")]
    LengthMismatch { predicted: usize, observed: usize },
    #[error("series needs at least 2 points, got {0}")]
    TooShort(usize),
    #[error("series is constant; correlation is undefined")]
    DegenerateSeries,
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("no rows to aggregate")]
    EmptyInput,
    #[error("line {line}: {reason}")]
    InvalidRow { line: u64, reason: String },
    #[error("category {category:?} is not defined for task {task}")]
    UnknownCategory { task: String, category: String },
    #[error("predictions for {} sample(s) have no annotation: {}", orphans.len(), orphans.join(", "))]
    JoinFailure { orphans: Vec<String> },
    #[error("duplicate prediction for method {method:?}, sample {sample_id:?}")]
    DuplicatePrediction { method: String, sample_id: String },
    #[error("{0}")]
    Io(String),
}

impl MetricsError {
    pub fn code(&self) -> &'static str {
        match self {
            MetricsError::LengthMismatch { .. } => "LengthMismatch",
            MetricsError::TooShort(_) => "TooShort",
            MetricsError::DegenerateSeries => "DegenerateSeries",
            MetricsError::NonFinite => "NonFinite",
            MetricsError::EmptyInput => "EmptyInput",
            MetricsError::InvalidRow { .. } => "InvalidRow",
            MetricsError::UnknownCategory { .. } => "UnknownCategory",
            MetricsError::JoinFailure { .. } => "JoinFailure",
            MetricsError::DuplicatePrediction { .. } => "DuplicatePrediction",
            MetricsError::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for MetricsError {
    fn from(e: std::io::Error) -> Self {
        MetricsError::Io(e.to_string())
    }
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;
