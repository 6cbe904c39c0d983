use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch on {axis}: expected {expected}, got {actual}")]
    ShapeMismatch {
        op: &'static str,
        axis: String,
        expected: usize,
        actual: usize,
    },

    #[error("{op}: rank mismatch: expected {expected} axes, got {actual}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{op}: {axis} would have zero or negative extent")]
    EmptyExtent { op: &'static str, axis: String },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("batch norm '{0}' used in eval mode before any statistics were recorded")]
    UninitializedStatistics(String),

    #[error("layer stack: unit {index} ({unit}) expects {expected} input channels but receives {actual}")]
    ChannelChain {
        index: usize,
        unit: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("unknown {kind} '{name}' (known: {known})")]
    UnknownName {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("data: {0}")]
    Data(String),

    #[error("file size mismatch: expected {expected} bytes, got {actual}")]
    SizeMismatch { expected: u64, actual: u64 },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("checkpoint config digest {found} does not match model digest {expected}")]
    DigestMismatch { expected: String, found: String },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    RawIo(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
