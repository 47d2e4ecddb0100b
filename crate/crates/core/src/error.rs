use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;
use crate::feature_store::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("sample count mismatch: image has {img} rows, text has {txt}")]
    SampleCountMismatch { img: usize, txt: usize },

    #[error("sample ids differ at row {row}: {img:?} vs {txt:?}")]
    IdMismatch {
        row: usize,
        img: String,
        txt: String,
    },

    #[error("need more than k={k} samples for a k-NN graph, got {n}")]
    TooFewSamples { n: usize, k: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("point set is empty")]
    EmptySet,

    #[error("coreset size {k} out of range for {n} samples")]
    KOutOfRange { k: usize, n: usize },

    #[error("assignment infeasible: {k} proxies but only {n} samples")]
    Infeasible { k: usize, n: usize },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("malformed {what} at line {line}: {msg}")]
    Parse {
        what: &'static str,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
