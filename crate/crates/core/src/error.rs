use thiserror::Error;

use crate::store::FileId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodingError {
    #[error("invalid credential: {0}")]
    InvalidCredential(&'static str),
    #[error("invalid prefix {prefix:?}: {reason}")]
    InvalidPrefix { prefix: String, reason: String },
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("segment width {width} does not divide {total}")]
    InvalidSegmentation { width: usize, total: usize },
    #[error("invalid hash address {0:?}")]
    InvalidAddress(String),
    #[error("unsupported radix {0} (expected 2 or 16)")]
    InvalidRadix(u32),
    #[error("bits per file must be at least 1")]
    EmptyFile,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("partition {0} has been erased")]
    Erased(FileId),
    #[error("partition {0} is unavailable")]
    Unavailable(FileId),
    #[error("actor {actor:?} exceeded its write quota")]
    RateLimited { actor: String },
    #[error("cannot merge replicas of different files ({0} vs {1})")]
    MergeMismatch(FileId, FileId),
    #[error("registry snapshot is stale (snapshot generation {snapshot}, current {current})")]
    StaleRegistry { snapshot: u64, current: u64 },
    #[error("bit position {position} out of range for a {bits}-bit file")]
    PositionOutOfRange { position: u64, bits: u64 },
    #[error("unknown partition {0}")]
    UnknownFile(FileId),
    #[error("no live partitions")]
    NoLiveFiles,
    #[error("invalid store configuration: {0}")]
    InvalidConfig(String),
    #[error("could not allocate {0} distinct registry addresses")]
    AddressExhaustion(usize),
    #[error("malformed store data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl StoreError {
    /// Erasure and unavailability are the two faults retrieval may wildcard.
    pub fn is_fault(&self) -> bool {
        matches!(self, StoreError::Erased(_) | StoreError::Unavailable(_))
    }
}
