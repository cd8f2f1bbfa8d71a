use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("inconsistent state: {0}")]
    InconsistentState(String),

    #[error("loss of observability at t = {t}: Y1 = {y1:e} is below the {tol:e} gate")]
    LossOfObservability { t: f64, y1: f64, tol: f64 },

    #[error("integration diverged at t = {t}: {what}")]
    IntegrationDiverged { t: f64, what: String },

    #[error("reconstruction domain error at t = {t}: arcsin argument {arg}")]
    ReconstructionDomain { t: f64, arg: f64 },

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config validation error for `{key}`: {message}")]
    ConfigValidation { key: String, message: String },

    #[error("missing required config keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigValidation {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Re-stamps errors raised by time-agnostic helpers with the simulation time.
    pub(crate) fn at(self, time: f64) -> Self {
        match self {
            Error::LossOfObservability { y1, tol, .. } => Error::LossOfObservability { t: time, y1, tol },
            Error::ReconstructionDomain { arg, .. } => Error::ReconstructionDomain { t: time, arg },
            Error::IntegrationDiverged { what, .. } => Error::IntegrationDiverged { t: time, what },
            other => other,
        }
    }
}
