use std::path::PathBuf;

use tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("token {token} at position {position} is outside the vocabulary of size {vocab_size}")]
    TokenOutOfRange {
        token: u32,
        position: usize,
        vocab_size: usize,
    },

    #[error("sequence length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("sample has no tokens")]
    EmptySequence,

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("non-finite {what}")]
    NonFinite { what: String },

    #[error("pool holds {available} samples but {required} are required")]
    InsufficientPool { available: usize, required: usize },

    #[error("unbalanced split: {members} members vs {non_members} non-members")]
    Unbalanced { members: usize, non_members: usize },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("feature layout mismatch: {0}")]
    Layout(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Self::Stage { .. } => e,
            other => Self::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
