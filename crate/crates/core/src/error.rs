use thiserror::Error;

/// Error type shared across the audit pipeline.
#[derive(Debug, Error)]
pub enum AuditError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dataset rejected ({reason}): {detail}")]
    DatasetRejected { reason: RejectReason, detail: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("config hash mismatch: expected {expected}, found {found}")]
    ConfigHashMismatch { expected: String, found: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

/// Reason codes for dataset rejection during filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    TooFewSeries,
    AllDegenerate,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::TooFewSeries => write!(f, "too_few_series"),
            RejectReason::AllDegenerate => write!(f, "all_degenerate"),
        }
    }
}

impl From<serde_json::Error> for AuditError {
    fn from(e: serde_json::Error) -> Self {
        AuditError::Serde(e.to_string())
    }
}

impl From<csv::Error> for AuditError {
    fn from(e: csv::Error) -> Self {
        AuditError::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AuditError>;
