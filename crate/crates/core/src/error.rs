use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (jitter escalated to {jitter:e} x mean diagonal)")]
    NotPositiveDefinite { jitter: f64 },

    #[error("matrix is not symmetric: max asymmetry {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("requested rank {rank} exceeds matrix size {size}")]
    InvalidRank { rank: usize, size: usize },

    #[error("objective evaluated to a non-finite value ({0})")]
    NonFiniteLoss(f64),

    #[error("exact GP oracle limited to {limit} points, got {n}")]
    OracleTooLarge { n: usize, limit: usize },

    #[error("unknown model variant `{0}`")]
    UnknownVariant(String),

    #[error("point ({x}, {y}) lies outside the environment extent")]
    OutOfBounds { x: f64, y: f64 },

    #[error("targets have zero variance")]
    ZeroVariance,

    #[error("predictive or training variance must be positive")]
    NonPositiveVariance,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed grid file: {0}")]
    GridFormat(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the caller's files or settings rather than
    /// by the numerics.
    pub fn is_user_input(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::GridFormat(_)
                | Error::Checkpoint(_)
                | Error::Io { .. }
                | Error::Json(_)
                | Error::UnknownVariant(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
