//! Episode loop for training and greedy evaluation of every agent kind.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vrmec_core::environment::{
    EnvConfig, Environment, Forecaster, HybridAction, SlotOutcome, SystemState, UniformForecaster,
};

use crate::action::{binarize_and_repair, random_raw, ActionLayout, RawActionOutput, SlotView};
use crate::ddpg::{AgentConfig, Batch, Ddpg};
use crate::predictor::LstmPredictor;
use crate::replay::{ReplayBuffer, Transition};
use crate::state::{PopularityInput, StateEncoder};
use crate::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    /// DDPG fed the LSTM forecast.
    LstmDdpg,
    /// DDPG fed the raw request window.
    Ddpg,
    Random,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::LstmDdpg => "lstm-ddpg",
            AgentKind::Ddpg => "ddpg",
            AgentKind::Random => "random",
        }
    }

    pub fn needs_predictor(self) -> bool {
        self == AgentKind::LstmDdpg
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lstm-ddpg" => Ok(AgentKind::LstmDdpg),
            "ddpg" => Ok(AgentKind::Ddpg),
            "random" => Ok(AgentKind::Random),
            other => Err(AgentError::Config(format!(
                "unknown agent `{other}` (expected lstm-ddpg, ddpg or random)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub total_reward: f64,
    pub mean_latency_s: f64,
    pub p95_latency_s: f64,
    #[serde(rename = "total_energy_J")]
    pub total_energy_j: f64,
    pub mean_cost: f64,
}

impl EpisodeMetrics {
    pub fn from_outcomes(episode: usize, outcomes: &[SlotOutcome]) -> Self {
        let n = outcomes.len().max(1) as f64;
        let mut lat: Vec<f64> = outcomes.iter().map(|o| o.t_total).collect();
        lat.sort_by(f64::total_cmp);
        Self {
            episode,
            total_reward: outcomes.iter().map(|o| o.reward).sum(),
            mean_latency_s: lat.iter().sum::<f64>() / n,
            p95_latency_s: percentile(&lat, 0.95),
            total_energy_j: outcomes.iter().map(|o| o.e_total).sum(),
            mean_cost: outcomes.iter().map(|o| o.cost).sum::<f64>() / n,
        }
    }
}

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// A decision rule for one slot.
#[derive(Debug, Clone)]
pub enum Policy {
    Random,
    Ddpg { agent: Ddpg, encoder: StateEncoder },
}

impl Policy {
    /// Raw output and its repaired action. `noise_std = 0` is greedy.
    pub fn decide<R: Rng + ?Sized>(
        &self,
        env: &Environment,
        state: &SystemState,
        layout: ActionLayout,
        noise_std: f64,
        rng: &mut R,
    ) -> Result<(RawActionOutput, HybridAction), AgentError> {
        let raw = match self {
            Policy::Random => random_raw(layout, rng),
            Policy::Ddpg { agent, encoder } => {
                RawActionOutput::new(layout, agent.select_action(&encoder.encode(state), noise_std, rng)?)
            }
        };
        let action = binarize_and_repair(&raw, &SlotView::of(env)?);
        Ok((raw, action))
    }
}

/// A policy plus what is needed to rebuild its environment.
#[derive(Debug, Clone)]
pub struct TrainedAgent {
    pub kind: AgentKind,
    pub policy: Policy,
    pub predictor: Option<LstmPredictor>,
    pub metrics: Vec<EpisodeMetrics>,
}

pub fn action_layout(cfg: &EnvConfig) -> Result<ActionLayout, AgentError> {
    let grid = cfg.validate()?;
    Ok(ActionLayout {
        fov_tiles: grid.fov_size(),
        local_capacity: cfg.local_cache_tiles,
        mec_capacity: cfg.mec_cache_tiles,
    })
}

/// Environment whose forecaster matches the agent kind.
pub fn make_env(cfg: &EnvConfig, kind: AgentKind, predictor: Option<&LstmPredictor>) -> Result<Environment, AgentError> {
    let grid = cfg.validate()?;
    let forecaster: Box<dyn Forecaster + Send> = match (kind, predictor) {
        (AgentKind::LstmDdpg, Some(p)) => {
            if p.window() != cfg.popularity.window_slots || p.viewpoints() != grid.viewpoint_count() {
                return Err(AgentError::Config("predictor window or width does not match the environment".into()));
            }
            Box::new(p.clone())
        }
        (AgentKind::LstmDdpg, None) => {
            return Err(AgentError::Config("lstm-ddpg needs a pre-trained predictor".into()));
        }
        _ => Box::new(UniformForecaster::new(grid.viewpoint_count())),
    };
    Ok(Environment::with_forecaster(cfg.clone(), forecaster)?)
}

fn build_policy<R: Rng + ?Sized>(
    cfg: &EnvConfig,
    kind: AgentKind,
    agent_cfg: &AgentConfig,
    rng: &mut R,
) -> Result<Policy, AgentError> {
    let input = match kind {
        AgentKind::Random => return Ok(Policy::Random),
        AgentKind::LstmDdpg => PopularityInput::Forecast,
        AgentKind::Ddpg => PopularityInput::History,
    };
    let grid = cfg.validate()?;
    let encoder = StateEncoder::new(&grid, cfg.popularity.window_slots, input, agent_cfg.gain_scale)?;
    let agent = Ddpg::new(encoder.dim(), action_layout(cfg)?, agent_cfg, rng)?;
    Ok(Policy::Ddpg { agent, encoder })
}

/// Trains an agent of `kind` for `agent_cfg.episodes` episodes of
/// `slots_per_episode` slots. `on_episode` sees every episode's metrics as
/// they are produced. The random agent only runs episodes.
pub fn train(
    env_cfg: &EnvConfig,
    kind: AgentKind,
    agent_cfg: &AgentConfig,
    predictor: Option<&LstmPredictor>,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeMetrics),
) -> Result<TrainedAgent, AgentError> {
    agent_cfg.validate()?;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.random());
    let mut env = make_env(env_cfg, kind, predictor)?;
    let layout = action_layout(env_cfg)?;
    let mut policy = build_policy(env_cfg, kind, agent_cfg, &mut rng)?;
    let mut replay = ReplayBuffer::new(agent_cfg.replay_capacity);
    let mut metrics = Vec::with_capacity(agent_cfg.episodes);
    let mut outcomes = Vec::with_capacity(agent_cfg.slots_per_episode);

    for episode in 0..agent_cfg.episodes {
        let noise = agent_cfg.noise_at(episode);
        let mut state = env.reset(seeds.random());
        outcomes.clear();
        for _ in 0..agent_cfg.slots_per_episode {
            let (raw, action) = policy.decide(&env, &state, layout, noise, &mut rng)?;
            let (outcome, next) = env.step(&action)?;
            if let Policy::Ddpg { agent, encoder } = &mut policy {
                replay.push(Transition {
                    state: encoder.encode(&state),
                    action: raw.values,
                    reward: outcome.reward * agent_cfg.reward_scale,
                    next_state: encoder.encode(&next),
                });
                if replay.len() >= agent_cfg.batch_size {
                    let batch = Batch::from_transitions(&replay.sample(agent_cfg.batch_size, &mut rng))?;
                    agent.train_step(&batch)?;
                }
            }
            outcomes.push(outcome);
            state = next;
        }
        if let Policy::Ddpg { agent, .. } = &policy {
            if !agent.all_finite() {
                return Err(AgentError::Data(format!("non-finite network parameters after episode {episode}")));
            }
        }
        let m = EpisodeMetrics::from_outcomes(episode, &outcomes);
        on_episode(&m);
        metrics.push(m);
    }
    Ok(TrainedAgent {
        kind,
        policy,
        predictor: predictor.filter(|_| kind.needs_predictor()).cloned(),
        metrics,
    })
}

/// Runs `episodes` noise-free episodes of `slots` slots each.
pub fn evaluate(
    env_cfg: &EnvConfig,
    agent: &TrainedAgent,
    episodes: usize,
    slots: usize,
    seed: u64,
) -> Result<Vec<EpisodeMetrics>, AgentError> {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.random());
    let mut env = make_env(env_cfg, agent.kind, agent.predictor.as_ref())?;
    let layout = action_layout(env_cfg)?;
    let mut out = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let mut state = env.reset(seeds.random());
        let mut outcomes = Vec::with_capacity(slots);
        for _ in 0..slots {
            let (_, action) = agent.policy.decide(&env, &state, layout, 0.0, &mut rng)?;
            let (outcome, next) = env.step(&action)?;
            outcomes.push(outcome);
            state = next;
        }
        out.push(EpisodeMetrics::from_outcomes(episode, &outcomes));
    }
    Ok(out)
}

/// An untrained agent of `kind`; for the random kind this is the baseline.
pub fn untrained(env_cfg: &EnvConfig, kind: AgentKind, agent_cfg: &AgentConfig, predictor: Option<&LstmPredictor>, seed: u64) -> Result<TrainedAgent, AgentError> {
    train(
        env_cfg,
        kind,
        &AgentConfig {
            episodes: 0,
            ..agent_cfg.clone()
        },
        predictor,
        seed,
        |_| {},
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.95), 95.0);
        assert_eq!(percentile(&v[..1], 0.95), 1.0);
        assert_eq!(percentile(&[1.0, 2.0, 3.0], 0.95), 3.0);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [AgentKind::LstmDdpg, AgentKind::Ddpg, AgentKind::Random] {
            assert_eq!(k.as_str().parse::<AgentKind>().unwrap(), k);
        }
        assert!("naf".parse::<AgentKind>().is_err());
    }

    #[test]
    fn short_random_run() {
        let cfg = EnvConfig::default();
        let agent_cfg = AgentConfig {
            episodes: 3,
            slots_per_episode: 10,
            ..AgentConfig::default()
        };
        let mut seen = 0;
        let a = train(&cfg, AgentKind::Random, &agent_cfg, None, 1, |_| seen += 1).unwrap();
        assert_eq!(seen, 3);
        assert_eq!(a.metrics.len(), 3);
        for m in &a.metrics {
            assert!((m.total_reward + 10.0 * m.mean_cost).abs() < 1e-9 * m.total_reward.abs());
            assert!(m.p95_latency_s.is_finite() && m.total_energy_j > 0.0);
        }
    }
}
