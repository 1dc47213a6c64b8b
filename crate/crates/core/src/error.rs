use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value {value} at {location}")]
    NonFinite { location: String, value: f64 },

    #[error("parse error in {source_name} at {position}: {message}")]
    Parse {
        source_name: String,
        position: String,
        message: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("stream exhausted: {0}")]
    StreamExhausted(String),

    #[error("missing data: {0}")]
    Missing(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("refusing to overwrite existing output at {0} (pass the overwrite flag)")]
    OutputExists(PathBuf),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI's JSON error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::NonFinite { .. } => "non_finite",
            Error::Parse { .. } => "parse",
            Error::Empty(_) => "empty",
            Error::StreamExhausted(_) => "stream_exhausted",
            Error::Missing(_) => "missing",
            Error::OutOfRange(_) => "out_of_range",
            Error::Io { .. } => "io",
            Error::OutputExists(_) => "output_exists",
        }
    }
}
