use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the propagation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("insufficient data: need at least {needed} correspondences, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("no consensus: {0}")]
    NoConsensus(String),

    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("depth map has no finite entries")]
    EmptyDepth,

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user-supplied configuration rather than
    /// by processing failures.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Argument(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
