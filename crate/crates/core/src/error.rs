use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("support violation at (s={state}, a={action}): d > 0 where d_exp = 0")]
    SupportViolation { state: usize, action: usize },

    #[error("full support required: noise distribution is zero at state {0}")]
    NoFullSupport(usize),

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("non-finite loss at batch index {batch_index:?}")]
    NonFiniteLoss { batch_index: Option<usize> },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("checksum mismatch: file is corrupt or truncated")]
    Checksum,

    #[error("unsupported format version: {0}")]
    Version(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
