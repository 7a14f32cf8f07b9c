//! Learning side of the simulator: the LSTM popularity forecaster, the DDPG
//! agent that drives offloading and cache replacement, and the baselines.

pub mod action;
pub mod ddpg;
pub mod predictor;
pub mod replay;
pub mod state;
pub mod train;

pub use action::{binarize_and_repair, random_policy, ActionLayout, RawActionOutput, SlotView};
pub use ddpg::{AgentConfig, Ddpg};
pub use predictor::{LstmPredictor, PredictorConfig, PredictorSample};
pub use replay::{ReplayBuffer, Transition};
pub use state::StateEncoder;
pub use train::{AgentKind, EpisodeMetrics, Policy, TrainedAgent};

use thiserror::Error;
use vrmec_core::{CoreError, EnvError};
use vrmec_nn::NnError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("bad data: {0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
}
