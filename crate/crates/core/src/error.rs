use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid GOP structure: {0}")]
    InvalidStructure(String),

    #[error("invalid model parameters: {}", format_violations(.0))]
    InvalidParams(Vec<Violation>),

    #[error("dimension mismatch: {0}")]
    Mismatch(String),

    #[error("trace too short: {gops} GOPs, need at least {needed}")]
    TraceTooShort { gops: usize, needed: usize },

    #[error("observation at GOP {gop} has zero probability under the model")]
    ImpossibleObservation { gop: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero-variance series has no autocorrelation")]
    ConstantSeries,

    #[error("empty input")]
    EmptyInput,

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("{path}: no GOPs")]
    NoGops { path: PathBuf },

    #[error("{path}: unsupported format_version {found} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
