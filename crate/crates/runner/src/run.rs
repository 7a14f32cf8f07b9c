//! Training, evaluation and sweep drivers with their on-disk artifacts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use vrmec_agent::predictor::build_dataset;
use vrmec_agent::train::{evaluate, train, untrained, AgentKind, EpisodeMetrics, Policy, TrainedAgent};
use vrmec_agent::LstmPredictor;
use vrmec_core::environment::AblationFlags;
use vrmec_core::popularity::MarkovZipfProcess;
use vrmec_nn::checkpoint::{read_tensors, write_tensors};
use vrmec_nn::Params;

use crate::config::ExperimentConfig;
use crate::stats::MeanCi;
use crate::RunnerError;

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const AGENT_CHECKPOINT: &str = "agent.ckpt";
pub const PREDICTOR_CHECKPOINT: &str = "predictor.ckpt";
pub const PREDICTOR_LOSS_FILE: &str = "predictor_loss.csv";

/// Writes through a sibling temp file so readers never see partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunnerError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, RunnerError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| RunnerError::Io(e.into_error()))
}

pub fn metrics_csv(rows: &[EpisodeMetrics]) -> Result<Vec<u8>, RunnerError> {
    if rows.is_empty() {
        return Ok(b"episode,total_reward,mean_latency_s,p95_latency_s,total_energy_J,mean_cost\n".to_vec());
    }
    csv_bytes(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeMetrics>, RunnerError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn derived_seed(seed: u64, salt: u64) -> u64 {
    seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Pre-trains the forecaster on a simulated trace. Returns the model and
/// its per-pass training loss.
pub fn pretrain_predictor(cfg: &ExperimentConfig) -> Result<(LstmPredictor, Vec<f64>), RunnerError> {
    let grid = cfg.env.validate().map_err(|e| RunnerError::Config(e.to_string()))?;
    let window = cfg.env.popularity.window_slots;
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, 1));
    let mut chain = MarkovZipfProcess::from_config(&cfg.env.popularity, grid.viewpoint_count())
        .map_err(|e| RunnerError::Config(e.to_string()))?;
    let data = build_dataset(&chain.trace(cfg.predictor.trace_slots, &mut rng), window)?;
    let mut p = LstmPredictor::new(&grid, window, &cfg.predictor, &mut rng)?;
    let curve = p.train(&data, &cfg.predictor, derived_seed(cfg.seed, 2))?;
    Ok((p, curve))
}

#[derive(Serialize)]
struct LossRow {
    pass: usize,
    mean_loss: f64,
}

fn save_tensors(path: &Path, tensors: &[&vrmec_nn::Matrix]) -> Result<(), RunnerError> {
    let mut buf = Vec::new();
    write_tensors(&mut buf, tensors)?;
    write_atomic(path, &buf)
}

fn save_predictor(dir: &Path, p: &LstmPredictor, curve: &[f64]) -> Result<(), RunnerError> {
    save_tensors(&dir.join(PREDICTOR_CHECKPOINT), &p.tensors())?;
    let rows: Vec<LossRow> = curve
        .iter()
        .enumerate()
        .map(|(pass, &mean_loss)| LossRow { pass, mean_loss })
        .collect();
    write_atomic(&dir.join(PREDICTOR_LOSS_FILE), &csv_bytes(&rows)?)
}

/// Trains one agent and writes the config echo, the per-episode metrics,
/// and checkpoints into `dir`. Pre-trains a forecaster when the agent needs
/// one and none is given.
pub fn run_training(
    cfg: &ExperimentConfig,
    predictor: Option<&LstmPredictor>,
    dir: &Path,
    mut progress: impl FnMut(&EpisodeMetrics),
) -> Result<TrainedAgent, RunnerError> {
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    let mut echo = cfg.clone();
    echo.output_dir = dir.to_path_buf();
    write_atomic(&dir.join(CONFIG_FILE), echo.to_toml().as_bytes())?;

    let pretrained;
    let predictor = match (cfg.agent_kind.needs_predictor(), predictor) {
        (false, _) => None,
        (true, Some(p)) => Some(p),
        (true, None) => {
            let (p, curve) = pretrain_predictor(cfg)?;
            save_predictor(dir, &p, &curve)?;
            pretrained = p;
            Some(&pretrained)
        }
    };
    if let Some(p) = predictor {
        save_tensors(&dir.join(PREDICTOR_CHECKPOINT), &p.tensors())?;
    }
    let agent = train(&cfg.env, cfg.agent_kind, &cfg.agent, predictor, cfg.seed, &mut progress)?;
    write_atomic(&dir.join(METRICS_FILE), &metrics_csv(&agent.metrics)?)?;
    if let Policy::Ddpg { agent: ddpg, .. } = &agent.policy {
        save_tensors(&dir.join(AGENT_CHECKPOINT), &ddpg.tensors())?;
    }
    Ok(agent)
}

/// Rebuilds a trained agent from the checkpoints in `dir`.
pub fn load_agent(cfg: &ExperimentConfig, dir: &Path) -> Result<TrainedAgent, RunnerError> {
    let predictor = if cfg.agent_kind.needs_predictor() {
        let grid = cfg.env.validate().map_err(|e| RunnerError::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = LstmPredictor::new(&grid, cfg.env.popularity.window_slots, &cfg.predictor, &mut rng)?;
        let t = read_tensors(fs::File::open(dir.join(PREDICTOR_CHECKPOINT))?)?;
        p.load(&t)?;
        Some(p)
    } else {
        None
    };
    let mut agent = untrained(&cfg.env, cfg.agent_kind, &cfg.agent, predictor.as_ref(), cfg.seed)?;
    if let Policy::Ddpg { agent: ddpg, .. } = &mut agent.policy {
        let t = read_tensors(fs::File::open(dir.join(AGENT_CHECKPOINT))?)?;
        ddpg.load_tensors(&t)?;
    }
    if dir.join(METRICS_FILE).exists() {
        agent.metrics = read_metrics(&dir.join(METRICS_FILE))?;
    }
    Ok(agent)
}

#[derive(Debug, Clone)]
pub struct EvalRow {
    pub seed: u64,
    pub metrics: EpisodeMetrics,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Mean episode reward of each evaluation seed.
    pub seed_rewards: Vec<f64>,
    pub reward: MeanCi,
    pub latency: MeanCi,
    pub energy: MeanCi,
}

impl EvalReport {
    pub fn to_csv(&self) -> Result<Vec<u8>, RunnerError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "seed",
            "episode",
            "total_reward",
            "mean_latency_s",
            "p95_latency_s",
            "total_energy_J",
            "mean_cost",
        ])?;
        for r in &self.rows {
            let m = &r.metrics;
            w.write_record([
                r.seed.to_string(),
                m.episode.to_string(),
                m.total_reward.to_string(),
                m.mean_latency_s.to_string(),
                m.p95_latency_s.to_string(),
                m.total_energy_j.to_string(),
                m.mean_cost.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| RunnerError::Io(e.into_error()))
    }
}

/// Evaluation seed `i`; disjoint from the training seed stream.
pub fn eval_seed(cfg: &ExperimentConfig, i: usize) -> u64 {
    derived_seed(cfg.seed, 1000 + i as u64)
}

/// Greedy episodes over every evaluation seed. CIs are over per-seed means.
pub fn run_eval(cfg: &ExperimentConfig, agent: &TrainedAgent) -> Result<EvalReport, RunnerError> {
    let ev = &cfg.evaluation;
    let mut rows = Vec::new();
    let (mut rew, mut lat, mut en) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..ev.seeds {
        let seed = eval_seed(cfg, i);
        let ms = evaluate(&cfg.env, agent, ev.episodes_per_seed, cfg.agent.slots_per_episode, seed)?;
        let n = ms.len() as f64;
        rew.push(ms.iter().map(|m| m.total_reward).sum::<f64>() / n);
        lat.push(ms.iter().map(|m| m.mean_latency_s).sum::<f64>() / n);
        en.push(ms.iter().map(|m| m.total_energy_j).sum::<f64>() / n);
        rows.extend(ms.into_iter().map(|metrics| EvalRow { seed, metrics }));
    }
    Ok(EvalReport {
        rows,
        reward: MeanCi::of(&rew),
        latency: MeanCi::of(&lat),
        energy: MeanCi::of(&en),
        seed_rewards: rew,
    })
}

/// Means over the trailing fraction of training episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Converged {
    pub reward: f64,
    pub latency_s: f64,
    pub energy_j: f64,
    pub cost: f64,
}

pub fn converged(metrics: &[EpisodeMetrics], fraction: f64) -> Converged {
    let n = ((metrics.len() as f64 * fraction).ceil() as usize).clamp(1, metrics.len().max(1));
    let tail = &metrics[metrics.len().saturating_sub(n)..];
    let avg = |f: fn(&EpisodeMetrics) -> f64| tail.iter().map(f).sum::<f64>() / tail.len() as f64;
    Converged {
        reward: avg(|m| m.total_reward),
        latency_s: avg(|m| m.mean_latency_s),
        energy_j: avg(|m| m.total_energy_j),
        cost: avg(|m| m.mean_cost),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Omega,
    CacheMec,
    CacheLocal,
    Ablation,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Omega => "omega",
            SweepAxis::CacheMec => "cache_mec",
            SweepAxis::CacheLocal => "cache_local",
            SweepAxis::Ablation => "ablation",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::Omega => (1..=9).map(|i| i as f64 / 10.0).collect(),
            SweepAxis::CacheMec => (3..=12).map(f64::from).collect(),
            SweepAxis::CacheLocal => (1..=7).map(f64::from).collect(),
            SweepAxis::Ablation => (1..=4).map(f64::from).collect(),
        }
    }

    /// Config at one sweep value. Cache sweeps pin the other cache at its
    /// sweep default (`M_L = 3` or `M_E = 8`).
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig, RunnerError> {
        let mut cfg = base.clone();
        let count = |v: f64| -> Result<usize, RunnerError> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(RunnerError::Usage(format!("{} values must be positive integers, got {v}", self.as_str())))
            }
        };
        match self {
            SweepAxis::Omega => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(RunnerError::Usage(format!("omega must lie in [0, 1], got {value}")));
                }
                cfg.env.weights.omega = value;
            }
            SweepAxis::CacheMec => {
                cfg.env.local_cache_tiles = 3;
                cfg.env.mec_cache_tiles = count(value)?;
            }
            SweepAxis::CacheLocal => {
                cfg.env.mec_cache_tiles = 8;
                cfg.env.local_cache_tiles = count(value)?;
            }
            SweepAxis::Ablation => {
                let n = count(value)?;
                cfg.env.flags = u8::try_from(n)
                    .ok()
                    .and_then(AblationFlags::config)
                    .ok_or_else(|| RunnerError::Usage(format!("ablation must be 1, 2, 3 or 4, got {value}")))?;
            }
        }
        cfg.validate().map_err(|e| RunnerError::Usage(format!("{} = {value}: {e}", self.as_str())))?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = RunnerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "omega" => Ok(SweepAxis::Omega),
            "cache_mec" => Ok(SweepAxis::CacheMec),
            "cache_local" => Ok(SweepAxis::CacheLocal),
            "ablation" => Ok(SweepAxis::Ablation),
            other => Err(RunnerError::Usage(format!(
                "unknown sweep axis `{other}` (expected omega, cache_mec, cache_local or ablation)"
            ))),
        }
    }
}

/// One trained and evaluated sweep point.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub axis: String,
    pub value: f64,
    pub agent: AgentKind,
    pub seed: u64,
    pub converged_reward: f64,
    pub converged_latency_s: f64,
    #[serde(rename = "converged_energy_J")]
    pub converged_energy_j: f64,
    pub converged_cost: f64,
    pub eval_reward_mean: f64,
    pub eval_reward_ci95: f64,
    pub eval_latency_s: f64,
    #[serde(rename = "eval_energy_J")]
    pub eval_energy_j: f64,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub agents: Vec<AgentKind>,
    /// Training seeds per point: `base.seed`, `base.seed + 1`, ...
    pub seeds: usize,
}

pub fn point_dir(root: &Path, axis: SweepAxis, value: f64, agent: AgentKind, seed: u64) -> PathBuf {
    root.join(format!("{axis}={value}")).join(agent.as_str()).join(format!("seed-{seed}"))
}

/// Trains and evaluates every (value, agent, seed) combination. The
/// forecaster is pre-trained once and shared. Writes
/// `sweep_<axis>.csv` under the base output directory.
pub fn run_sweep(
    base: &ExperimentConfig,
    spec: &SweepSpec,
    predictor: Option<&LstmPredictor>,
    mut progress: impl FnMut(&SweepPoint),
) -> Result<Vec<SweepPoint>, RunnerError> {
    if spec.values.is_empty() || spec.agents.is_empty() || spec.seeds == 0 {
        return Err(RunnerError::Usage("a sweep needs at least one value, agent and seed".into()));
    }
    let configs: Vec<ExperimentConfig> = spec
        .values
        .iter()
        .map(|&v| spec.axis.apply(base, v))
        .collect::<Result<_, _>>()?;
    let shared;
    let predictor = match predictor {
        Some(p) => Some(p),
        None if spec.agents.iter().any(|k| k.needs_predictor()) => {
            let (p, curve) = pretrain_predictor(base)?;
            save_predictor(&base.output_dir, &p, &curve)?;
            shared = p;
            Some(&shared)
        }
        None => None,
    };
    let mut points = Vec::new();
    for (cfg, &value) in configs.iter().zip(&spec.values) {
        for &agent in &spec.agents {
            for s in 0..spec.seeds as u64 {
                let mut run = cfg.clone();
                run.agent_kind = agent;
                run.seed = base.seed.wrapping_add(s);
                let dir = point_dir(&base.output_dir, spec.axis, value, agent, run.seed);
                let trained = run_training(&run, predictor, &dir, |_| {})?;
                let c = converged(&trained.metrics, run.evaluation.converged_fraction);
                let ev = run_eval(&run, &trained)?;
                write_atomic(&dir.join(EVAL_FILE), &ev.to_csv()?)?;
                let p = SweepPoint {
                    axis: spec.axis.to_string(),
                    value,
                    agent,
                    seed: run.seed,
                    converged_reward: c.reward,
                    converged_latency_s: c.latency_s,
                    converged_energy_j: c.energy_j,
                    converged_cost: c.cost,
                    eval_reward_mean: ev.reward.mean,
                    eval_reward_ci95: ev.reward.half_width,
                    eval_latency_s: ev.latency.mean,
                    eval_energy_j: ev.energy.mean,
                };
                progress(&p);
                points.push(p);
            }
        }
    }
    write_atomic(
        &base.output_dir.join(format!("sweep_{}.csv", spec.axis)),
        &csv_bytes(&points)?,
    )?;
    Ok(points)
}
