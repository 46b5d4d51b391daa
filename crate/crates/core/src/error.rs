use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame `{frame_id}`: missing file {path}")]
    MissingFile { frame_id: String, path: PathBuf },

    #[error("frame `{frame_id}`: cannot decode {path}: {reason}")]
    Decode {
        frame_id: String,
        path: PathBuf,
        reason: String,
    },

    #[error("frame `{frame_id}`: dimension mismatch in {path}: expected {expected:?}, found {found:?}")]
    FrameDimensions {
        frame_id: String,
        path: PathBuf,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("unknown frame `{0}`")]
    UnknownFrame(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("instance id {0} exceeds the 16-bit id space")]
    InstanceIdOverflow(u64),

    #[error("sidecar: {0}")]
    Sidecar(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("training: {0}")]
    Training(String),

    #[error("sampler: {0}")]
    EmptyPool(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("scene: {0}")]
    Scene(String),

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("split: {0}")]
    Split(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
