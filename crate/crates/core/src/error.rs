use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of a function (non-finite value, σ ≤ 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration or call parameter violates its contract.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A CSV cell could not be read as a finite number.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// A file does not follow the expected layout (missing `y`, ragged rows, ...).
    #[error("schema error: {0}")]
    Schema(String),

    /// A matrix that must be invertible is (numerically) singular.
    #[error("rank error: {0}")]
    Rank(String),

    /// An iterative numerical routine failed.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Vector or matrix shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
