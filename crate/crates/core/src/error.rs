use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate projection: homogeneous denominator {0:e} is too close to zero")]
    DegenerateProjection(f64),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("singular matrix: determinant {0:e}")]
    SingularMatrix(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported image format: {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("no readable images in {0}")]
    EmptySourceDirectory(PathBuf),

    #[error("split `{0}` has no records")]
    EmptySplit(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NanLoss { step: usize, detail: String },

    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("model file checksum mismatch (file truncated or corrupted)")]
    ChecksumMismatch,

    #[error("internal error: {0}")]
    Internal(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
