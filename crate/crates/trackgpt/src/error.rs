use std::path::PathBuf;

use thiserror::Error;
use trackgpt_core::{CodecError, GptError, MetricsError, PrepError, RegulatorError};

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Config(String),
    #[error("{what}: {msg}")]
    Parse { what: String, msg: String },
    #[error("{0}")]
    Ingest(String),
    #[error("{0}")]
    Coverage(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Prep(#[from] PrepError),
    #[error(transparent)]
    Gpt(#[from] GptError),
    #[error(transparent)]
    Regulator(#[from] RegulatorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(what: impl Into<String>, msg: impl std::fmt::Display) -> Self {
        Error::Parse { what: what.into(), msg: msg.to_string() }
    }

    /// Stable machine-readable code printed by the command line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "E_IO",
            Error::Config(_) => "E_CONFIG",
            Error::Parse { .. } => "E_PARSE",
            Error::Ingest(_) => "E_INGEST",
            Error::Coverage(_) | Error::Codec(CodecError::Coverage { .. }) => "E_COVERAGE",
            Error::Regulator(RegulatorError::Codec(CodecError::Coverage { .. })) => "E_COVERAGE",
            Error::Codec(_) => "E_CODEC",
            Error::Prep(PrepError::Empty) => "E_EMPTY",
            Error::Prep(_) => "E_PREP",
            Error::Gpt(GptError::NonFiniteLoss { .. }) => "E_DIVERGED",
            Error::Gpt(_) => "E_MODEL",
            Error::Regulator(_) => "E_FORECAST",
            Error::Metrics(_) => "E_METRICS",
        }
    }

    /// Process exit status for the command line.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } => 3,
            Error::Parse { .. } | Error::Ingest(_) => 4,
            _ => 1,
        }
    }
}
