//! Experiment orchestration: configuration files, training and evaluation
//! runs, parameter sweeps, and the verification suites.

pub mod config;
pub mod run;
pub mod stats;
pub mod verify;

pub use config::{EvalConfig, ExperimentConfig};

use thiserror::Error;
use vrmec_agent::AgentError;
use vrmec_core::EnvError;
use vrmec_nn::NnError;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RunnerError {
    /// 1 for usage and configuration problems, 2 for failed verification.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunnerError::Verification(_) => 2,
            _ => 1,
        }
    }
}
