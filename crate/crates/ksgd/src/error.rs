//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error enumeration.
#[derive(Debug, Error)]
pub enum KsgdError {
    /// A vector or matrix had the wrong length for the operation.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A configuration or argument value is outside its legal range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An input carried a NaN or infinity where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// An operation that needs data received none.
    #[error("empty dataset: {0}")]
    EmptyData(&'static str),

    /// An input value lies outside the domain the operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine broke down (loss of positive definiteness,
    /// non-finite update, failed factorization).
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A declared data schema does not match the file it was applied to.
    #[error("schema error: {0}")]
    Schema(String),

    /// A data row could not be parsed under the abort policy.
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: u64, reason: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, KsgdError>;

impl KsgdError {
    /// Coarse failure category, used by callers that map errors to process
    /// exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            KsgdError::DimensionMismatch { .. }
            | KsgdError::InvalidParameter(_)
            | KsgdError::Schema(_) => ErrorCategory::Config,
            KsgdError::EmptyData(_)
            | KsgdError::MalformedRow { .. }
            | KsgdError::Io(_)
            | KsgdError::Csv(_) => ErrorCategory::Data,
            KsgdError::NonFinite(_) | KsgdError::Domain(_) | KsgdError::NumericalFailure(_) => {
                ErrorCategory::Numerical
            }
        }
    }
}

/// Failure categories for exit-code mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
}
