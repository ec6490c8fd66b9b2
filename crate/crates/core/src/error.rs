//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    MalformedLine {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("document {index} is empty after tokenization")]
    EmptyDocument { index: usize },

    #[error("pruning at min_doc_fraction={fraction} removed every word")]
    EmptyVocabulary { fraction: f64 },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("document {doc_id} has no label but the operation requires labels")]
    MissingLabel { doc_id: String },

    #[error("expected a binary label in {{0, 1}}, found {0}")]
    NonBinaryLabel(f64),

    #[error("prediction sets disagree on documents: {0}")]
    DocIdMismatch(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("shard {shard}: {source}")]
    Shard {
        shard: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model file: {0}")]
    ModelFormat(String),
}
