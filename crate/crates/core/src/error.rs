use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("weight file format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("weight file invariant violated in layer `{layer}` (byte {offset}): {message}")]
    LayerInvariant {
        layer: String,
        offset: u64,
        message: String,
    },

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error(
        "image {width}x{height} is too small for layer {layer} (needs at least 3x3 activations)"
    )]
    ImageTooSmall {
        width: usize,
        height: usize,
        layer: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("mask is empty at layer {0}")]
    EmptyMask(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid style probabilities: {0}")]
    StyleProbs(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    ImageFormat { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::ImageFormat { .. }
                | Error::Json { .. }
                | Error::Format { .. }
                | Error::LayerInvariant { .. }
        )
    }
}
