//! Library side of the `exitfsp` command-line tool.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(exitfsp::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for configuration and file problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<exitfsp::Error> for CliError {
    fn from(e: exitfsp::Error) -> Self {
        use exitfsp::Error as E;
        match e {
            E::StepLimit { .. }
            | E::StepSizeUnderflow { .. }
            | E::NonFinite { .. }
            | E::Negative { .. }
            | E::Consistency(_)
            | E::Monotonicity(_) => CliError::Numeric(e),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
