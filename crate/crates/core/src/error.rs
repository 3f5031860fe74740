use thiserror::Error;

use crate::optimizer::Trajectory;

pub type Result<T, E = NcmapError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NcmapError {
    #[error("invalid dimension: expected {expected}, got {got}")]
    InvalidDimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    /// The iteration produced a non-finite value or left the divergence
    /// guard. The partial trajectory up to (and including) the last finite
    /// iterate is kept.
    #[error("run diverged at step {step}: {reason}")]
    Diverged {
        step: usize,
        reason: String,
        partial: Box<Trajectory>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NcmapError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        NcmapError::InvalidParameter(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(NcmapError::InvalidDimension { expected, got });
    }
    Ok(())
}
