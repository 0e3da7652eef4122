//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A dimension is out of the allowed range (too small, too large, or zero).
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// A numeric parameter is non-finite or otherwise outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Tensor or image shapes do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A matrix fails the SE(3) invariants.
    #[error("invalid pose: {0}")]
    InvalidPose(String),

    /// A caller-facing contract was violated (empty input, bad index, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration is inconsistent or failed to parse.
    #[error("config error: {0}")]
    Config(String),

    /// A serialized file is malformed. `offset` is the byte position of the
    /// first inconsistency.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Training produced a non-finite loss.
    #[error("divergence at step {step}: loss = {loss}")]
    Divergence { step: u64, loss: f64 },

    /// Geometry does not permit rendering (camera behind the scene, ...).
    #[error("render error: {0}")]
    Render(String),

    /// I/O failure, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
