use std::path::PathBuf;

use racelens_core::config::ConfigError;
use racelens_core::eval::EvalError;
use racelens_core::store::StoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("provider unavailable: {0}")]
    Provider(String),
    #[error("gate failed: {metric} = {value:.4} is below {gate}")]
    Gate { metric: &'static str, value: f64, gate: f64 },
    #[error("{path}: {reason}")]
    File { path: PathBuf, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::File { .. } => 2,
            CliError::Provider(_) => 3,
            CliError::Gate { .. } => 4,
        }
    }

    pub fn file(path: &std::path::Path, reason: impl ToString) -> Self {
        CliError::File { path: path.to_path_buf(), reason: reason.to_string() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}
