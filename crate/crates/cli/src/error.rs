use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid or incomplete configuration, detected before any computation.
    #[error("{0}")]
    Config(String),

    #[error("config file {} is empty", .0.display())]
    EmptyConfig(PathBuf),

    /// A computation failed after the run started.
    #[error("{0}")]
    Numerical(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::EmptyConfig(_) => 2,
            CliError::Numerical(_) | CliError::Io { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::EmptyConfig(_) => "empty_config",
            CliError::Numerical(_) => "numerical_failure",
            CliError::Io { .. } => "io_failure",
        }
    }

    pub fn diagnostic(&self, written: &[PathBuf]) -> Value {
        json!({
            "status": "error",
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
            "partial": !written.is_empty(),
            "outputs": written,
        })
    }
}

/// Tags a fallible result as a configuration or a numerical failure.
pub trait Classify<T> {
    fn config(self, what: &str) -> Result<T, CliError>;
    fn numerical(self, what: &str) -> Result<T, CliError>;
}

impl<T, E: Display> Classify<T> for Result<T, E> {
    fn config(self, what: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Config(format!("{what}: {e}")))
    }

    fn numerical(self, what: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Numerical(format!("{what}: {e}")))
    }
}
