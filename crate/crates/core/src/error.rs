use thiserror::Error;

/// Errors raised by oracles, estimators and optimizers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported oracle: {0}")]
    UnsupportedOracle(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),
    #[error("invalid state: {0}")]
    InvalidState(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite {what} at iteration {iter}")]
    NonFinite { what: &'static str, iter: u64 },
    #[error("dimension {d} exceeds dense cap {cap}; use the shifted power method")]
    DenseCapExceeded { d: usize, cap: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
