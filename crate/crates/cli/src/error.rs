use std::fmt::Display;

use thiserror::Error;

/// A failed command. Bad input is the caller's to fix and exits 2;
/// anything else exits 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Internal(#[from] anyhow::Error),
}

impl CliError {
    pub fn invalid(msg: impl Display) -> Self {
        CliError::Invalid(msg.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
