use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("row {row}: {msg}")]
    Csv { row: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numerical overflow: {0}")]
    Overflow(String),
    #[error("non-finite objective: {0}")]
    NonFinite(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
