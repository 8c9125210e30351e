use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed raw dataset content.
    #[error("{source_name}: {message}")]
    Ingest { source_name: String, message: String },

    #[error("canonical corpus: {0}")]
    Schema(String),

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("label set mismatch: {0}")]
    LabelSetMismatch(String),

    #[error("tokenizer: {0}")]
    Tokenizer(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

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

    pub(crate) fn ingest(source_name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Ingest {
            source_name: source_name.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the input data rather than the runtime.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Ingest { .. }
                | Error::Schema(_)
                | Error::InvalidCorpus(_)
                | Error::Json(_)
                | Error::LabelSetMismatch(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
