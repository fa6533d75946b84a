//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or argument value.
    #[error("config: {0}")]
    Config(String),

    /// Dimension mismatch between tensors, batches, or model parts.
    #[error("shape: {0}")]
    Shape(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents (bad magic, truncation, unparseable header).
    #[error("format: {0}")]
    Format(String),

    /// NaN or infinity where a finite value is required.
    #[error("non-finite: {0}")]
    NonFinite(String),

    #[error("no voiced frames for normalization")]
    NoVoicedFrames,

    /// Too few mutually voiced frames to compute a trajectory metric.
    #[error("insufficient overlap: {0}")]
    InsufficientOverlap(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
