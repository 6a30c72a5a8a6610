use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("range error: {0}")]
    Range(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("no certificate found: {0}")]
    NoCertificate(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("hypothesis {index} violated: {detail}")]
    Hypothesis { index: usize, detail: String },
    #[error("non-terminating at resolution: {0}")]
    NonTerminating(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
