//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed PCD input. `line` is 1-based.
    #[error("pcd parse error at line {line}: {msg}")]
    PcdParse { line: usize, msg: String },

    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    Config(String),

    /// Tensor or grid dimensions do not match what an operation requires.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    /// Problems with dataset layout, pairing, splitting or loading.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Checkpoint serialization or compatibility failure.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Training aborted because a gradient went non-finite.
    #[error("non-finite gradient in parameter {name} (step {step})")]
    NonFiniteGradient { name: String, step: u64 },

    /// `backward` was called before any `forward_train`.
    #[error("backward called without a stored forward pass")]
    BackwardWithoutForward,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error is a bad-input problem (as opposed to an internal
    /// failure). The CLI maps this to its usage exit code.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::PcdParse { .. } | Error::Config(_) | Error::Dataset(_) => true,
            Error::Checkpoint(_) => true,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
