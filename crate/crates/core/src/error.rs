use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the command line to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error in {file} at line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("alignment error: message file has {messages} rows but order book file has {snapshots}")]
    Alignment { messages: usize, snapshots: usize },

    #[error("numerical blow-up at t = {time}: {detail}")]
    Blowup { time: f64, detail: String },

    #[error("time step too coarse: jump probabilities sum to {total} > 1 at step {step}")]
    TimeStepTooCoarse { step: u64, total: f64 },

    #[error("runaway event rate: {events} events before t = {time} (cap {cap}, last total rate {rate})")]
    RunawayRate {
        events: u64,
        cap: u64,
        time: f64,
        rate: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Domain(_) => ErrorCategory::Config,
            Error::Parse { .. } | Error::Alignment { .. } | Error::Csv(_) => ErrorCategory::Data,
            Error::Blowup { .. } | Error::TimeStepTooCoarse { .. } | Error::RunawayRate { .. } => {
                ErrorCategory::Numerical
            }
            Error::Io { .. } => ErrorCategory::Runtime,
        }
    }
}
