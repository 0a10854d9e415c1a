pub mod commands;
pub mod config;
pub mod io;

use std::path::PathBuf;

use thiserror::Error;

use crate::error::GameError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Model(#[from] GameError),
}

impl CliError {
    /// 2 for bad input, 3 for estimation failures, 4 for model errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Input(_) => 2,
            CliError::Model(GameError::DegenerateVolatility { .. }) => 3,
            CliError::Model(GameError::InsufficientData { .. } | GameError::InvalidSeries { .. }) => 2,
            CliError::Model(_) => 4,
        }
    }
}
