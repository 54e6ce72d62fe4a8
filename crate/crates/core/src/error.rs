use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("unsupported pixel format in {path}: {format} (expected 8-bit gray or RGB)")]
    UnsupportedBitDepth { path: PathBuf, format: String },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("stage gating violated: {0}")]
    Gating(String),
    #[error("degenerate data set: {0}")]
    Degenerate(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Stable numeric code, shared by the CLI diagnostics and the C ABI.
    pub fn code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            Error::Decode { .. } => 2,
            Error::UnsupportedBitDepth { .. } => 3,
            Error::InvalidImage(_) => 4,
            Error::DimensionMismatch(_) => 5,
            Error::InvalidArgument(_) => 6,
            Error::Config(_) => 7,
            Error::Schedule(_) => 8,
            Error::Gating(_) => 9,
            Error::Degenerate(_) => 10,
            Error::Numerical(_) => 11,
            Error::Manifest(_) => 12,
            Error::Json(_) => 13,
        }
    }
}
