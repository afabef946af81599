use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("stage `{stage}` requires endpoint role `{role}`, which is not configured")]
    MissingRole { stage: String, role: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("template `{template}`: {reason}")]
    Template { template: String, reason: String },

    #[error("endpoint error: {0}")]
    Endpoint(String),

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("histogram length mismatch: {0} vs {1}")]
    HistogramMismatch(usize, usize),

    #[error("empty score set")]
    EmptyScoreSet,

    #[error("ledger error: {0}")]
    Ledger(String),

    #[error("run already in progress (ledger lock {0} is held)")]
    LockHeld(PathBuf),

    #[error("ledger was created with config hash {ledger}, current config hash is {current}; pass --force to resume anyway")]
    ConfigHashMismatch { ledger: String, current: String },

    #[error("stage `{stage}` aborted after {failures} consecutive endpoint failures")]
    EndpointDown { stage: String, failures: usize },

    #[error("run interrupted after {0} ledger writes")]
    Interrupted(usize),

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

    /// Configuration problems map to a distinct CLI exit code.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::UnknownKeys(_) | Error::MissingRole { .. }
        )
    }
}
