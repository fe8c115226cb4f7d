use thiserror::Error;

/// Errors raised by the model, the proximal operators and the engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("block index {index} out of range for {count} blocks")]
    BlockIndex { index: usize, count: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value in block {block} at iteration {iteration}")]
    NonFinite { block: usize, iteration: u64 },

    #[error("operation not supported: {0}")]
    Unsupported(&'static str),

    #[error("malformed data file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
