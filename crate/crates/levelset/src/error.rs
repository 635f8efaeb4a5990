use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("domain error: {0}")]
    Domain(String),
    /// An oracle returned a value outside its contract.
    #[error("oracle contract violation: {0}")]
    Contract(String),
    /// An iterative procedure exceeded its iteration cap.
    #[error("exceeded {max_iters} iterations without terminating")]
    Timeout { max_iters: usize },
    /// Kernel matrix could not be factorized even after jitter.
    #[error("kernel matrix is not positive definite")]
    Factorization,
    /// Grid shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Malformed CSV input.
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse {
        row: usize,
        col: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
