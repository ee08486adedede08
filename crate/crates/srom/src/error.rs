//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// File does not look like one of our binary formats (bad magic/version).
    #[error("format error: {0}")]
    Format(String),

    /// File header and payload disagree (truncation, dimension mismatch).
    #[error("corrupt file: {0}")]
    CorruptFile(String),

    /// Data violates an invariant (non-uniform times, nonzero solid cells, ...).
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Not enough snapshots for the requested spectral estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A linear-algebra routine failed to converge or produced garbage.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("rollout diverged at step {step}: {msg}")]
    RolloutDiverged { step: usize, msg: String },

    #[error("hyperparameter search failed: {0}")]
    SearchFailed(String),

    /// Metric is undefined for the given input (e.g. zero-energy reference).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Internal consistency failure; indicates a bug, not bad user input.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
