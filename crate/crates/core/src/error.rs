use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An extent did not match what the operation requires.
    #[error("{op}: dimension mismatch on {axis} axis (expected {expected}, got {actual})")]
    Dimension {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        actual: usize,
    },

    /// Input is smaller than the operation can consume.
    #[error("{op}: input too small on {axis} axis (minimum {minimum}, got {actual})")]
    TooSmall {
        op: &'static str,
        axis: &'static str,
        minimum: usize,
        actual: usize,
    },

    #[error("{what} out of range: {detail}")]
    Range { what: &'static str, detail: String },

    #[error("{0}: produced a non-finite value")]
    NonFinite(&'static str),

    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("class index {index} out of range for {classes} classes")]
    ClassIndex { index: usize, classes: usize },

    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic (expected QFPRED01)")]
    BadMagic,
    #[error("unsupported format version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("parameter blob length mismatch: expected {expected} floats, found {actual}")]
    Length { expected: usize, actual: usize },
    #[error("parameter `{name}` has {actual} values, architecture requires {expected}")]
    Count {
        name: String,
        expected: usize,
        actual: usize,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn range(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Range {
            what,
            detail: detail.into(),
        }
    }
}
