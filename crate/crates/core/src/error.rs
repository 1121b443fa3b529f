use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {field}: {detail}")]
    Format { field: &'static str, detail: String },

    #[error("length error: expected {expected} payload bytes, found {actual}")]
    Length { expected: usize, actual: usize },

    #[error("tensor contains non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimsMismatch { expected: Vec<usize>, actual: Vec<usize> },

    #[error("invalid angle {0} deg: tilt angles must lie strictly inside (-90, 90)")]
    InvalidAngle(f64),

    #[error("invalid angle list: {0}")]
    AngleOrder(String),

    #[error("operation `{op}` cannot accept a {kind} stack")]
    Kind { op: &'static str, kind: &'static str },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("empty array")]
    Empty,

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("patch {index}: {source}")]
    Patch {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("missing model file {0}")]
    MissingModel(PathBuf),

    #[error("external command failed: {0}")]
    External(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn dims(expected: &[usize], actual: &[usize]) -> Self {
        Error::DimsMismatch { expected: expected.to_vec(), actual: actual.to_vec() }
    }
}
