use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation failed:\n{0}")]
    Validation(ValidationReport),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("size limit exceeded: {what} requires {required} entries, cap is {cap}")]
    SizeCap {
        what: String,
        required: u128,
        cap: u128,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("oracle returned a non-finite value at iteration {iteration}")]
    NonFinite { iteration: usize },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
