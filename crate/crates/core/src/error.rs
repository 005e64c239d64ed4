use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("dimension mismatch: expected dim={expected}, got dim={got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty reference set")]
    EmptyReferenceSet,

    #[error("empty point set")]
    EmptyPointSet,

    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("set too small to separate: |X|={size} must exceed alpha*mu={threshold}")]
    SetTooSmall { size: usize, threshold: f64 },

    #[error("enumeration guard exceeded: {0}")]
    GuardExceeded(String),

    #[error("certificate violation: {0}")]
    LemmaViolation(String),

    #[error("insufficient surplus u(R): {0}")]
    InsufficientSurplus(String),

    #[error("partition aborted: {0}")]
    PartitionAborted(String),

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),
}

impl GeoError {
    /// True for failures of a checked property rather than of the input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            GeoError::LemmaViolation(_) | GeoError::InsufficientSurplus(_) | GeoError::PartitionAborted(_)
        )
    }
}

pub type Result<T, E = GeoError> = std::result::Result<T, E>;
