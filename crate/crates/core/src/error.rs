use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// Malformed container bytes (WAV header, SPFX header or payload).
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed input using an encoding this crate does not read.
    #[error("unsupported {field}: {detail}")]
    Unsupported { field: &'static str, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty output: {0}")]
    EmptyOutput(String),

    #[error("mask {axis} start {start} length {length} exceeds extent {extent}")]
    MaskOutOfBounds {
        axis: &'static str,
        start: usize,
        length: usize,
        extent: usize,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("instance too large: {0}")]
    TooLarge(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad configuration or malformed inputs, as
    /// opposed to failures of an individual work item.
    pub fn is_config_or_format(&self) -> bool {
        matches!(
            self,
            Error::Format(_) | Error::Unsupported { .. } | Error::Config(_) | Error::Parse { .. } | Error::TooLarge(_)
        )
    }
}
