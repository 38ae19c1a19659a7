use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, unknown or out of range. `key` names it.
    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    /// Malformed input data (empty series, mismatched dimensions, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A parameter vector outside the model's domain.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Numerical failure while evaluating an objective or covariance.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// The feature map is not locally invertible at the requested point.
    #[error("identifiability error: {0} (run the embedding diagnostic)")]
    Identifiability(String),

    #[error("optimization error: {0}")]
    Optimization(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable label, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Input(_) => "input",
            Error::Parameter(_) => "parameter",
            Error::Estimation(_) => "estimation",
            Error::Identifiability(_) => "identifiability",
            Error::Optimization(_) => "optimization",
            Error::Io(_) => "io",
            Error::Serde(_) => "serialization",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
