use std::io;

use thiserror::Error;

use crx_core::emulator::{ConfigError, EmulatorError};
use crx_core::harness::HarnessError;
use crx_core::metrics::MetricsError;
use crx_core::stream::{LogError, StreamError, TrajectoryError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Input(#[from] TrajectoryError),
    #[error("{path}: {source}")]
    Log { path: String, source: LogError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Emulator(#[from] EmulatorError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: io::Error },
}

impl CliError {
    /// Process exit status for this error.
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::Log { .. } | CliError::Metrics(_) => 2,
            CliError::Emulator(EmulatorError::Config(_)) => 2,
            CliError::Emulator(EmulatorError::Bind { .. }) => 3,
            CliError::Emulator(EmulatorError::Spawn(_)) => 1,
            CliError::Harness(h) => match h {
                HarnessError::Spec(_) | HarnessError::Config(_) | HarnessError::Pose(_) | HarnessError::EmptyGrid => 2,
                HarnessError::Stream(StreamError::Handshake(_)) => 4,
                HarnessError::Stream(StreamError::StartMismatch { .. }) => 5,
                HarnessError::Stream(StreamError::InvalidOverride(_) | StreamError::InvalidArgument(_)) => 2,
                _ => 1,
            },
            CliError::Write { .. } => 1,
        }
    }
}
