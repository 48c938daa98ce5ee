use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid value: {0}")]
    Domain(String),

    #[error("segment index {index} out of range (stream has {total} segments)")]
    Range { index: usize, total: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("throughput history is empty")]
    EmptyHistory,

    #[error("transfer has zero active duration")]
    DegenerateDuration,

    #[error("session has no playback time")]
    ZeroPlayback,

    #[error("corrupt session log: {0}")]
    LogCorruption(String),

    #[error("qoe input has no played segments")]
    EmptyQoeInput,

    #[error("scenario {scenario}: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_scenario(self, scenario: &str) -> Self {
        Error::Scenario {
            scenario: scenario.to_string(),
            source: Box::new(self),
        }
    }
}
