use std::io;

use inband_sense::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unreachable target: {0}")]
    Unreachable(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    /// A validation run completed but too few rows agreed.
    #[error("validation failed: {passed} of {rows} rows within the confidence interval")]
    ValidationFailed { passed: usize, rows: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ValidationFailed { .. } => 1,
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Unreachable(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Calibration { .. } => CliError::Unreachable(e.to_string()),
            CoreError::Trial { ref source, .. } if matches!(**source, CoreError::Calibration { .. }) => {
                CliError::Unreachable(e.to_string())
            }
            _ if e.is_numerical() => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
