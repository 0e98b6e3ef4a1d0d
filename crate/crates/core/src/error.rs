use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero vector cannot be normalized")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("insufficient memory budget: {budget} bytes given, at least {minimum} bytes required")]
    InsufficientBudget { budget: usize, minimum: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported index file: {0}")]
    Format(String),
    #[error("truncated input")]
    Truncated,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
