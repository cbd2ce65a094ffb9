use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },

    #[error("{file}:{line}: duplicate key `{key}`")]
    DuplicateKey { file: String, line: u64, key: String },

    #[error("{file}:{line}: unknown analyte `{name}` (valid: {valid})")]
    UnknownAnalyte {
        file: String,
        line: u64,
        name: String,
        valid: String,
    },

    #[error("{file}:{line}: {kind} `{id}` does not exist")]
    UnknownReference {
        file: String,
        line: u64,
        kind: &'static str,
        id: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate label set: {positives} positives, {negatives} negatives")]
    DegenerateLabels { positives: usize, negatives: usize },

    #[error("degenerate comparison: zero variance of the AUC difference with nonzero delta")]
    DegenerateComparison,

    #[error("insufficient cases for {target}: {positives} positives, {negatives} negatives")]
    InsufficientCases {
        target: String,
        positives: usize,
        negatives: usize,
    },

    #[error("no usable baseline features")]
    NoUsableFeatures,

    #[error("quasi-separation detected")]
    QuasiSeparation,

    #[error("singular information matrix; collinear columns: {}", .0.join(", "))]
    SingularInformation(Vec<String>),

    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("metric undefined on {attempts} bootstrap draws (cap reached)")]
    BootstrapExhausted { attempts: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
