use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point is behind the camera (camera depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("OBJ parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("mesh has no vertices")]
    EmptyMesh,

    #[error("mask dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (u32, u32), b: (u32, u32) },

    #[error("no usable segmentation reference")]
    NoReference,

    #[error("mesh renders empty at the initial pose and at every first-sweep candidate")]
    DegenerateInitialization,

    #[error("unsupported schema version {0}")]
    UnknownSchemaVersion(u32),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
