use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    LabelParse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("failed to load dataset file {path}: {message}")]
    Load { path: PathBuf, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid augmentation: {0}")]
    InvalidAugment(String),

    #[error("image buffers differ: {0}")]
    DimensionMismatch(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("detections span several images ({first} and {second}); expected a single image")]
    MixedImages { first: String, second: String },

    #[error("detection references unknown image '{0}'")]
    UnknownImage(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("detections file line {line}: {message}")]
    Interchange { line: usize, message: String },

    #[error("backend '{backend}' failed: {message}")]
    Backend { backend: String, message: String },

    #[error("benchmark error: {0}")]
    Bench(String),

    #[error("invalid training config: {0}")]
    Config(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }
}
