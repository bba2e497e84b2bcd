use thiserror::Error;

/// Crate-wide error type.
///
/// The split mirrors how the CLI reports failures: `Shape` and `Domain` are
/// problems with otherwise well-formed data (exit code 1), `Format` and `Io`
/// are problems reading or writing artifacts (exit code 2).
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension mismatch: wrong lengths, non-divisible group sizes, etc.
    #[error("shape error: {0}")]
    Shape(String),
    /// Values or arguments outside the contract (non-finite input, bad counts).
    #[error("domain error: {0}")]
    Domain(String),
    /// Malformed file contents: bad magic, truncation, invalid fields.
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
