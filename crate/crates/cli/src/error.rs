use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gwlab_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use gwlab_core::Error as E;
        match self {
            CliError::Core(E::Capacity(_) | E::PrunedAccess(_)) => crate::EXIT_CAPACITY,
            _ => crate::EXIT_USAGE,
        }
    }
}
