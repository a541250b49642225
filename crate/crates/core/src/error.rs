use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("duplicate id {id:?} on lines {first} and {second}")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },

    #[error("line {line}: unknown label value {value}")]
    UnknownLabel { line: usize, value: String },

    #[error("document {id:?} has no gold label")]
    MissingLabel { id: String },

    #[error("duplicate prediction id {0:?}")]
    DuplicatePrediction(String),

    #[error("segmented document has {sentences} sentences but {separators} separators (expected sentences + 1)")]
    SeparatorMismatch { sentences: usize, separators: usize },

    #[error("paraphraser {name} returned {got} sentences for {expected} inputs")]
    ParaphraseLength {
        name: String,
        expected: usize,
        got: usize,
    },

    #[error("paraphrasing document {id:?} failed: {source}")]
    Augment {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("external adapter: {0}")]
    Adapter(String),

    #[error("token id {id} outside vocabulary of {buckets} buckets")]
    TokenOutOfRange { id: usize, buckets: usize },

    #[error("cannot encode an empty token sequence")]
    EmptyTokens,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate embedding: norm {0:e} below 1e-12")]
    DegenerateEmbedding(f64),

    #[error("invalid pair label {0} (must be +1 or -1)")]
    InvalidPairLabel(i8),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss {value} at step {step} (instances {ids:?})")]
    NonFiniteLoss {
        step: usize,
        value: f64,
        ids: Vec<String>,
    },

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
