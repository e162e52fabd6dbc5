use std::io;

use spme_core::Error as CoreError;

/// Errors mapped onto the exit-code contract.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Exit 2: unusable configuration or arguments.
    #[error("configuration error: {0}")]
    Config(String),
    /// Exit 1: a violated inequality, a blow-up or a failed study.
    #[error("scientific failure: {0}")]
    Science(String),
    /// Exit 2: output could not be written.
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn science(msg: impl Into<String>) -> Self {
        Self::Science(msg.into())
    }

    /// Parameter errors from the core are configuration errors.
    pub fn from_core_config(e: CoreError) -> Self {
        Self::Config(e.to_string())
    }

    /// Like [`Self::from_core_config`] but an ensemble without a single
    /// surviving path is a scientific failure.
    pub fn from_core(e: CoreError) -> Self {
        match e {
            CoreError::AllPathsBlewUp(_) => Self::Science(e.to_string()),
            other => Self::Config(other.to_string()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Science(_) => 1,
            Self::Config(_) | Self::Io(_) => 2,
        }
    }
}
