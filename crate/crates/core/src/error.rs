use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A hyperparameter or run setting is outside its valid range.
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    /// Caller supplied data that does not match what the model was built for.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dataset file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed header in {}: {reason}", .path.display())]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("unknown label {label:?} on line {line}")]
    UnknownLabel { label: String, line: usize },

    #[error("dataset error: {0}")]
    Data(String),

    #[error("checksum mismatch for {}: expected {expected}, found {found}", .path.display())]
    Checksum {
        path: PathBuf,
        expected: String,
        found: String,
    },

    /// No presynaptic spike precedes the reference time, so the update rule is undefined.
    #[error("no presynaptic spike precedes the reference time {reference_time} ms")]
    NoEligibleSpikes { reference_time: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Coarse category used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } | Error::Toml(_) => ErrorKind::Config,
            Error::MissingFile(_)
            | Error::MalformedHeader { .. }
            | Error::UnknownLabel { .. }
            | Error::Data(_)
            | Error::Checksum { .. }
            | Error::Csv(_) => ErrorKind::Data,
            _ => ErrorKind::Runtime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}
