use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants are grouped by the CLI exit code they map to: usage problems,
/// data validation failures, and numeric or model-constraint violations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("data validation failed: {0}")]
    Validation(String),

    #[error("estimation window has a varying asset count ({0}); restrict the date range to a period with no entries")]
    RaggedWindow(String),

    #[error("missing carry for {commodity} at {month}: {reason}")]
    MissingCarry {
        commodity: String,
        month: String,
        reason: String,
    },

    #[error("missing implied price for {commodity} at {month}")]
    MissingMonth { commodity: String, month: String },

    #[error("parameter constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("Sharpe ratio undefined: relative returns have zero standard deviation")]
    UndefinedSharpe,

    #[error("no active assets at rebalance date {0}")]
    EmptyActiveSet(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 usage, 3 data validation, 4 numeric/constraint.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::InsufficientData(_)
            | Error::Validation(_)
            | Error::RaggedWindow(_)
            | Error::MissingCarry { .. }
            | Error::MissingMonth { .. }
            | Error::EmptyActiveSet(_)
            | Error::Io { .. }
            | Error::Csv { .. }
            | Error::Json(_) => 3,
            Error::ConstraintViolation(_) | Error::Numeric(_) | Error::UndefinedSharpe => 4,
        }
    }
}
