use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid rank {rank}: must be in 1..={max}")]
    InvalidRank { rank: usize, max: usize },

    #[error("detector threshold has not been calibrated")]
    NotCalibrated,

    #[error("model oracle failed: {0}")]
    OracleError(String),

    #[error("corrupt tensor at byte {offset}: {reason}")]
    CorruptTensor { offset: usize, reason: &'static str },

    #[error("item {index}: {source}")]
    InBatch { index: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
