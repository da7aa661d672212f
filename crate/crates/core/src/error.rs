use std::path::PathBuf;

use thiserror::Error;

/// Every fallible operation in the crate returns this error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported encoding in {path}: {detail}")]
    UnsupportedEncoding { path: PathBuf, detail: String },

    #[error("malformed input {path}: {field}: {detail}")]
    MalformedInput {
        path: PathBuf,
        field: String,
        detail: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, trace {trace:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64, trace: f64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("degenerate baseline for layer {layer}, metric {metric}: value {value}")]
    DegenerateBaseline {
        layer: u8,
        metric: String,
        value: f64,
    },

    #[error("missing feature vector for slice {0}")]
    MissingFeature(String),

    #[error("degenerate contingency table: {0}")]
    DegenerateTable(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn malformed(
        path: impl Into<PathBuf>,
        field: impl Into<String>,
        detail: impl Into<String>,
    ) -> Self {
        Error::MalformedInput {
            path: path.into(),
            field: field.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Short stable name of the variant, used in CLI messages and FFI error strings.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnsupportedEncoding { .. } => "UnsupportedEncoding",
            Error::MalformedInput { .. } => "MalformedInput",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::DegenerateDistribution(_) => "DegenerateDistribution",
            Error::NotPositiveSemidefinite { .. } => "NotPositiveSemidefinite",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::DegenerateBaseline { .. } => "DegenerateBaseline",
            Error::MissingFeature(_) => "MissingFeature",
            Error::DegenerateTable(_) => "DegenerateTable",
            Error::Io { .. } => "IoError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
