use std::path::PathBuf;

use crate::graph::EdgeKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("dataset `{0}` already exists")]
    DatasetExists(String),
    #[error("invalid dataset id `{0}`")]
    InvalidDatasetId(String),
    #[error("batch already ingested (digest {digest}, batch {batch_id})")]
    DuplicateBatch { digest: String, batch_id: u64 },
    #[error("dataset `{0}` is locked by another writer")]
    Locked(String),
    #[error("unknown community label `{0}`")]
    UnknownCommunity(u64),
    #[error("unknown topic `{0}`")]
    UnknownTopic(usize),
    #[error("no topic model: run topic clustering first (`recluster --k-topics N`)")]
    NoTopicModel,
    #[error("no community partition: ingest a batch with interactions first")]
    NoPartition,
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("edge kind mismatch: graph holds {graph:?} edges, batch has {batch:?}")]
    KindMismatch { graph: EdgeKind, batch: EdgeKind },
    #[error("platform mismatch: dataset is {dataset}, batch record is {record}")]
    PlatformMismatch { dataset: String, record: String },
    #[error("need at least {needed} embedded posts, found {found}")]
    TooFewEmbeddings { needed: usize, found: usize },
    #[error("query vector has zero norm")]
    ZeroNormQuery,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown post `{0}`")]
    UnknownPost(String),
    #[error("post `{0}` has no embedding")]
    MissingEmbedding(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("corrupt state in {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
