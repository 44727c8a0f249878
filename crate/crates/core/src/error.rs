use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("channel '{0}': file not found")]
    FileNotFound(String),

    #[error("channel '{channel}': expected {expected} bytes, found {actual}")]
    SizeMismatch {
        channel: String,
        expected: u64,
        actual: u64,
    },

    #[error("duplicate channel name '{0}'")]
    DuplicateChannel(String),

    #[error("channel '{channel}': unknown dtype '{dtype}'")]
    UnknownDtype { channel: String, dtype: String },

    #[error("point out of bounds on {axis} axis: {value} not in [0, {limit})")]
    OutOfBounds {
        axis: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("annotation {id}: {reason}")]
    Annotation { id: i64, reason: String },

    #[error("unknown channel '{0}'")]
    UnknownChannel(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("invalid query '{name}': {reason}")]
    InvalidQuery { name: String, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("unknown detection id {0}")]
    UnknownDetection(usize),

    #[error("synthetic spec rejected: {0}")]
    Synth(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the environment (disk, permissions) rather than of
    /// the caller's inputs.
    pub fn is_runtime(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
