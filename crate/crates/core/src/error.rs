use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rank zero unsupported")]
    RankZero,

    #[error("invalid shape {0:?}: every dimension must be at least 1")]
    InvalidShape(Vec<usize>),

    #[error("data length {len} does not match shape {shape:?}")]
    LengthMismatch { shape: Vec<usize>, len: usize },

    #[error("dimension mismatch: {op} got {left:?} and {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("quality {0} outside 1..=100")]
    QualityOutOfRange(i64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model: {0}")]
    Model(String),

    #[error("gradient evaluation failed at path step {step}: {source}")]
    PathStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("image {id}: {source}")]
    Item {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("image format: {0}")]
    Format(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("provider: {message}{}", stderr_suffix(.stderr))]
    Provider { message: String, stderr: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn stderr_suffix(stderr: &str) -> String {
    let trimmed = stderr.trim();
    if trimmed.is_empty() {
        String::new()
    } else {
        format!(" (stderr: {trimmed})")
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn provider(message: impl Into<String>) -> Self {
        Error::Provider {
            message: message.into(),
            stderr: String::new(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
