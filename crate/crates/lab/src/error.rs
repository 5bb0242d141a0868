use std::path::PathBuf;

use width_sde_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Model(#[from] Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl LabError {
    pub fn config(msg: impl Into<String>) -> Self {
        LabError::Model(Error::ConfigError(msg.into()))
    }

    pub fn is_config_error(&self) -> bool {
        matches!(self, LabError::Model(Error::ConfigError(_)))
    }
}

pub type LabResult<T> = Result<T, LabError>;
