use thiserror::Error;

#[derive(Debug, Error)]
pub enum DwfsError {
    /// Input violates a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),
    /// Malformed grid file.
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DwfsError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(DwfsError::Validation(msg.into()))
}
