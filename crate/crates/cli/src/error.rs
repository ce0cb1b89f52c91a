use std::path::PathBuf;

use evshift_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}:{line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Env(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// Short machine-readable class, printed in the error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config { .. } | CliError::Env(_) => "config",
            CliError::Io { .. } | CliError::Core(CoreError::Io { .. }) => "io",
            CliError::Core(CoreError::Parse { .. }) => "parse",
            CliError::Core(CoreError::InvalidParameter { .. }) => "parameter",
            CliError::Core(_) => "data",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "usage" => 2,
            "config" => 3,
            "io" => 4,
            "parse" => 5,
            "parameter" => 6,
            _ => 7,
        }
    }

    /// The whole error on one line.
    pub fn line(&self) -> String {
        let message = self.to_string().replace(['\n', '\r'], " ");
        format!("evshift: error[{}]: {}", self.kind(), message.trim())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
