use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain an operation accepts.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// Input violates a precondition the caller is responsible for.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A set of samples that cannot be processed together.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Malformed dataset or result file. `row` is 1-based and counts the header.
    #[error("ingestion error at row {row}: {message}")]
    Ingest { row: usize, message: String },

    /// A user request that cannot be applied to the current state.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("synthetic configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn ingest(row: usize, msg: impl Into<String>) -> Self {
        Error::Ingest {
            row,
            message: msg.into(),
        }
    }

    /// True for failures caused by the file system rather than by the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            _ => false,
        }
    }

    /// Short machine-readable category used in error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Param(_) => "param",
            Error::Contract(_) => "contract",
            Error::Dataset(_) => "dataset",
            Error::Ingest { .. } => "ingest",
            Error::Validation(_) => "validation",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) if self.is_io() => "io",
            Error::Csv(_) => "csv",
        }
    }
}
