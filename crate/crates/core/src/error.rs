use std::path::PathBuf;

use thiserror::Error;

/// Every failure the toolkit reports. The variants map onto the CLI's exit
/// categories: ingestion and I/O failures are `1`, configuration, shape and
/// validation failures are `2`, numeric failures are `3`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("index error: {index} out of range for {len} views")]
    Index { index: usize, len: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("ingestion error in {}: {message}", file.display())]
    Ingestion { file: PathBuf, message: String },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn ingestion(file: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Ingestion {
            file: file.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code for this error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Ingestion { .. } => 1,
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
