use std::path::PathBuf;

use thiserror::Error;

use crate::providers::ProviderError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}:{line}: malformed record: {msg}")]
    MalformedRecord { path: PathBuf, line: usize, msg: String },
    #[error("line {line}: malformed CoNLL-U: {msg}")]
    MalformedConllu { line: usize, msg: String },
    #[error("line {line}: head index {head} out of range for a sentence of {len} tokens")]
    HeadOutOfRange { line: usize, head: usize, len: usize },
    #[error("duplicate document id `{0}`")]
    DuplicateDocumentId(String),
    #[error("record `{id}` has frame label `{label}` which is not in the configured label set")]
    UnknownFrameLabel { id: String, label: String },
    #[error("invalid frame label set: {0}")]
    InvalidLabelSet(String),
    #[error("document `{0}` has no dependency parse")]
    UnparsedDocument(String),
    #[error("relation `{0}` does not occur on this edge")]
    RelationAbsent(String),
    #[error("span `{span}` could not be aligned to context `{context}`")]
    SpanNotAligned { span: String, context: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {loss}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("generation was empty")]
    EmptyExpansion,
    #[error("k = {k} exceeds the number of distinct vectors ({distinct})")]
    TooManyClusters { k: usize, distinct: usize },
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("vocabulary is empty after filtering")]
    EmptyVocabulary,
    #[error("no cluster has at least two members in its top-ranked set")]
    NoEligibleCluster,
    #[error("agreement is undefined: expected disagreement is zero but observed disagreement is not")]
    UndefinedAgreement,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid tensor file: {0}")]
    TensorFormat(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn is_provider(&self) -> bool {
        matches!(self, Error::Provider(_))
    }
}
