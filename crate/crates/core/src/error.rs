use thiserror::Error;

/// Errors produced by the analysis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{field} {reason} (got {value})")]
    Validation {
        field: &'static str,
        reason: &'static str,
        value: String,
    },

    #[error("kind/payload mismatch: kind is {kind} but payload is {payload}")]
    KindMismatch {
        kind: &'static str,
        payload: &'static str,
    },

    #[error("identifier must be 6 bytes, got {0}")]
    IdentifierLength(usize),

    #[error("hash salt must not be empty")]
    EmptySalt,

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("schedule has no scheduled scans")]
    EmptySchedule,

    #[error("input is not sorted by strictly increasing timestamp at index {0}")]
    Unsorted(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-positive discharge rate {0} %/h")]
    NonPositiveRate(f64),

    #[error("infeasible synthetic configuration: {0}")]
    InfeasibleConfig(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: &'static str, value: impl ToString) -> Self {
        Error::Validation {
            field,
            reason,
            value: value.to_string(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
