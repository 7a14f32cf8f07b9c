//! Experiment configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vrmec_agent::{AgentConfig, PredictorConfig};
use vrmec_agent::train::AgentKind;
use vrmec_core::environment::{AblationFlags, EnvConfig};

use crate::RunnerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Independent evaluation seeds.
    pub seeds: usize,
    pub episodes_per_seed: usize,
    /// Trailing fraction of training episodes averaged as the converged value.
    pub converged_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seeds: 10,
            episodes_per_seed: 10,
            converged_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub agent_kind: AgentKind,
    pub output_dir: PathBuf,
    pub env: EnvConfig,
    pub predictor: PredictorConfig,
    pub agent: AgentConfig,
    pub evaluation: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2021,
            agent_kind: AgentKind::LstmDdpg,
            output_dir: PathBuf::from("runs/default"),
            env: EnvConfig::default(),
            predictor: PredictorConfig::default(),
            agent: AgentConfig::default(),
            evaluation: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunnerError> {
        let cfg: Self = toml::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunnerError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            RunnerError::Config(m) => RunnerError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let field = |name: &str, e: &dyn std::fmt::Display| RunnerError::Config(format!("{name}: {e}"));
        self.env.validate().map_err(|e| field("env", &e))?;
        self.predictor.validate().map_err(|e| field("predictor", &e))?;
        self.agent.validate().map_err(|e| field("agent", &e))?;
        let ev = &self.evaluation;
        if ev.seeds == 0 || ev.episodes_per_seed == 0 {
            return Err(field("evaluation", &"seeds and episodes_per_seed must be positive"));
        }
        if !(ev.converged_fraction > 0.0 && ev.converged_fraction <= 1.0) {
            return Err(field("evaluation.converged_fraction", &"must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn set_ablation(&mut self, config: u8) -> Result<(), RunnerError> {
        self.env.flags = AblationFlags::config(config)
            .ok_or_else(|| RunnerError::Usage(format!("ablation must be 1, 2, 3 or 4, got {config}")))?;
        Ok(())
    }
}
