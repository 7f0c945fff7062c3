use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the registration library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed correspondence input: {0}")]
    MalformedCorrespondence(String),

    #[error("not a rotation matrix: {0}")]
    NotARotation(String),

    #[error("empty point cloud")]
    EmptyCloud,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("underdetermined input: need at least {needed} pairs, got {got}")]
    Underdetermined { needed: usize, got: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix logarithm domain error: {0}")]
    LogDomain(String),

    #[error("invalid unit quaternion (norm {0})")]
    NonUnitQuaternion(f64),

    #[error("trimming left no correspondences")]
    EmptyMatchSet,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
