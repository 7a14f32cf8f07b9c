//! Verification suites behind `check-oracle` and `check-grad`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use vrmec_agent::action::{random_policy, SlotView};
use vrmec_agent::ddpg::{AgentConfig, Ddpg};
use vrmec_agent::train::action_layout;
use vrmec_core::environment::{evaluate_snapshot, Environment, HybridAction, SlotOutcome};
use vrmec_core::oracle::{enumerate_feasible, recompute_cost, SlotSnapshot, MAX_FOV_TILES, MAX_LOCAL_CACHE, MAX_MEC_CACHE};
use vrmec_core::EnvError;
use vrmec_nn::gradcheck::{check_input, check_params, GradReport};
use vrmec_nn::loss::mse;
use vrmec_nn::{Activation, Lstm, Matrix, Mlp, Params};

use crate::config::ExperimentConfig;
use crate::run::write_atomic;
use crate::RunnerError;

pub const ORACLE_TOLERANCE: f64 = 1e-9;
pub const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-5;

pub type Evaluator<'a> = &'a dyn Fn(&SlotSnapshot, &HybridAction) -> Result<SlotOutcome, EnvError>;

/// Relative difference, zero when both values are zero.
pub fn relative_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of feasible actions implied by the masking and pairing rules.
pub fn feasible_count(s: &SlotSnapshot) -> Result<usize, RunnerError> {
    let fov = s.fov().map_err(|e| RunnerError::Config(e.to_string()))?;
    let z = fov.len();
    let (ml, me) = (s.local_cache.len(), s.mec_cache.len());
    let patterns: Vec<u64> = if s.flags.segmentation_enabled {
        (0..1u64 << z).collect()
    } else {
        vec![0, (1u64 << z) - 1]
    };
    let mut total = 0;
    for p in patterns {
        let off = |i: usize| p >> i & 1 == 1;
        let r = (0..z).filter(|&i| !off(i) && !s.local_cache.contains(&fov[i])).count();
        let q = (0..z).filter(|&i| off(i) && !s.mec_cache.contains(&fov[i])).count();
        total += if s.flags.caching_replacement_enabled {
            (0..=r).map(|j| binom(r, j) * binom(ml, j)).sum::<usize>()
                * (0..=q).map(|j| binom(q, j) * binom(me, j)).sum::<usize>()
        } else {
            1
        };
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub trials: usize,
    pub max_relative_error: f64,
    pub actions_enumerated: usize,
}

#[derive(Serialize)]
struct Failure<'a> {
    trial: usize,
    reason: String,
    action: &'a HybridAction,
    snapshot: &'a SlotSnapshot,
}

fn fail(dir: Option<&Path>, trial: usize, reason: String, snapshot: &SlotSnapshot, action: &HybridAction) -> RunnerError {
    let mut msg = format!("trial {trial}: {reason}");
    if let Some(dir) = dir {
        let path: PathBuf = dir.join(format!("oracle_failure_{trial}.toml"));
        let f = Failure {
            trial,
            reason,
            action,
            snapshot,
        };
        match toml::to_string(&f) {
            Ok(text) => match write_atomic(&path, text.as_bytes()) {
                Ok(()) => msg.push_str(&format!(" (snapshot written to {})", path.display())),
                Err(e) => msg.push_str(&format!(" (could not write snapshot: {e})")),
            },
            Err(e) => msg.push_str(&format!(" (could not serialize snapshot: {e})")),
        }
    }
    RunnerError::Verification(msg)
}

/// Differential and enumeration checks on `trials` random slots.
pub fn check_oracle(cfg: &ExperimentConfig, trials: usize, seed: u64, failures: Option<&Path>) -> Result<OracleReport, RunnerError> {
    check_oracle_with(cfg, trials, seed, failures, &evaluate_snapshot)
}

/// Same as [`check_oracle`], with the environment-side cost evaluation
/// supplied by the caller.
pub fn check_oracle_with(
    cfg: &ExperimentConfig,
    trials: usize,
    seed: u64,
    failures: Option<&Path>,
    evaluate: Evaluator<'_>,
) -> Result<OracleReport, RunnerError> {
    cfg.validate()?;
    let grid = cfg.env.validate().map_err(|e| RunnerError::Config(e.to_string()))?;
    if grid.fov_size() > MAX_FOV_TILES || cfg.env.local_cache_tiles > MAX_LOCAL_CACHE || cfg.env.mec_cache_tiles > MAX_MEC_CACHE {
        return Err(RunnerError::Usage(format!(
            "exhaustive enumeration needs Z <= {MAX_FOV_TILES}, M_L <= {MAX_LOCAL_CACHE}, M_E <= {MAX_MEC_CACHE}"
        )));
    }
    let mut env = Environment::new(cfg.env.clone()).map_err(|e| RunnerError::Config(e.to_string()))?;
    let layout = action_layout(&cfg.env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport {
        trials,
        max_relative_error: 0.0,
        actions_enumerated: 0,
    };
    for trial in 0..trials {
        env.reset(rng.random());
        for _ in 0..rng.random_range(0..20) {
            let a = random_policy(&SlotView::of(&env)?, layout, &mut rng);
            env.step(&a)?;
        }
        let snap = env.snapshot()?;
        let all = enumerate_feasible(&snap).map_err(|e| RunnerError::Verification(e.to_string()))?;
        let idle = HybridAction::idle(vec![false; layout.fov_tiles], layout.local_capacity, layout.mec_capacity);
        let expected = feasible_count(&snap)?;
        if all.len() != expected {
            let reason = format!("oracle enumerated {} actions, closed form gives {expected}", all.len());
            return Err(fail(failures, trial, reason, &snap, &idle));
        }
        let unique: HashSet<&HybridAction> = all.iter().collect();
        if unique.len() != all.len() {
            return Err(fail(failures, trial, "duplicate actions in enumeration".into(), &snap, &idle));
        }
        for a in &all {
            if let Err(e) = env.validate(a) {
                return Err(fail(failures, trial, format!("enumerated action rejected: {e}"), &snap, a));
            }
        }
        report.actions_enumerated += all.len();

        let action = &all[rng.random_range(0..all.len())];
        let mine = evaluate(&snap, action)?;
        let theirs = recompute_cost(&snap, action)?;
        for ((name, a), b) in mine.fields().zip(theirs.values()) {
            let d = relative_diff(a, b);
            if !(d <= ORACLE_TOLERANCE) {
                let reason = format!("field {name}: environment {a:e} vs oracle {b:e} (relative {d:e})");
                return Err(fail(failures, trial, reason, &snap, action));
            }
            report.max_relative_error = report.max_relative_error.max(d);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct GradCase {
    pub name: String,
    pub report: GradReport,
}

/// Hook applied to analytic gradients before comparison.
pub type Tamper<'a> = &'a dyn Fn(&str, &mut [Matrix]);

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

struct LstmStack {
    lower: Lstm,
    upper: Lstm,
    head: Mlp,
}

impl Params for LstmStack {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut v = self.lower.tensors();
        v.extend(self.upper.tensors());
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.lower.tensors_mut();
        v.extend(self.upper.tensors_mut());
        v.extend(self.head.tensors_mut());
        v
    }
}

impl LstmStack {
    fn predict(&self, xs: &[Matrix]) -> Matrix {
        let h1 = self.lower.predict(xs).unwrap();
        let h2 = self.upper.predict(&h1).unwrap();
        self.head.predict(h2.last().unwrap()).unwrap()
    }
}

/// Finite-difference checks of dense, LSTM and critic gradients on small
/// networks (at most 10³ parameters each).
pub fn grad_suite(seed: u64, tamper: Tamper<'_>) -> Result<Vec<GradCase>, RunnerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    let mut push = |name: String, report: GradReport| cases.push(GradCase { name, report });

    for (hidden, out) in [
        (Activation::Tanh, Activation::Linear),
        (Activation::Sigmoid, Activation::Softmax),
        (Activation::Relu, Activation::Sigmoid),
    ] {
        let mut net = Mlp::new(&[6, 12, 10, 4], hidden, out, &mut rng);
        let x = random_matrix(5, 6, &mut rng);
        let target = random_matrix(5, 4, &mut rng);
        let (y, tape) = net.forward(&x, None)?;
        let (_, dy) = mse(&y, &target)?;
        let (mut dx, mut grads) = net.backward(&tape, &dy)?;
        let name = format!("dense {hidden:?}/{out:?}");
        tamper(&name, &mut grads);
        tamper(&format!("{name} input"), std::slice::from_mut(&mut dx));
        push(name.clone(), check_params(&mut net, &grads, GRAD_STEP, |n| mse(&n.predict(&x).unwrap(), &target).unwrap().0));
        push(format!("{name} input"), check_input(&x, &dx, GRAD_STEP, |xx| mse(&net.predict(xx).unwrap(), &target).unwrap().0));
    }

    let mut net = LstmStack {
        lower: Lstm::new(3, 5, &mut rng),
        upper: Lstm::new(5, 4, &mut rng),
        head: Mlp::new(&[4, 6], Activation::Linear, Activation::Softmax, &mut rng),
    };
    let xs: Vec<Matrix> = (0..4).map(|_| random_matrix(2, 3, &mut rng)).collect();
    let target = random_matrix(2, 6, &mut rng).mapv(f64::abs);
    let (h1, t1) = net.lower.forward(&xs)?;
    let (h2, t2) = net.upper.forward(&h1)?;
    let (y, th) = net.head.forward(h2.last().unwrap(), None)?;
    let (_, dy) = mse(&y, &target)?;
    let (dlast, grads_head) = net.head.backward(&th, &dy)?;
    let mut dh2 = vec![Array2::zeros(dlast.dim()); h2.len()];
    *dh2.last_mut().unwrap() = dlast;
    let (dh1, grads_upper) = net.upper.backward(&t2, &dh2)?;
    let (_, mut grads) = net.lower.backward(&t1, &dh1)?;
    grads.extend(grads_upper);
    grads.extend(grads_head);
    tamper("lstm", &mut grads);
    push("lstm".into(), check_params(&mut net, &grads, GRAD_STEP, |n| mse(&n.predict(&xs), &target).unwrap().0));

    let layout = vrmec_agent::ActionLayout {
        fov_tiles: 2,
        local_capacity: 1,
        mec_capacity: 2,
    };
    let cfg = AgentConfig {
        hidden: vec![10, 8],
        ..AgentConfig::default()
    };
    let agent = Ddpg::new(5, layout, &cfg, &mut rng)?;
    let states = random_matrix(6, 5, &mut rng).mapv(f64::abs);
    let actions = random_matrix(6, layout.len(), &mut rng).mapv(f64::abs);
    let mut da = agent.critic_action_gradient(&states, &actions)?;
    tamper("critic action input", std::slice::from_mut(&mut da));
    push(
        "critic action input".into(),
        check_input(&actions, &da, GRAD_STEP, |a| {
            agent.q_values(&states, a).unwrap().iter().sum()
        }),
    );
    let mut grads = agent.actor_grads(&states)?;
    tamper("actor through critic", &mut grads);
    let critic = agent.critic().clone();
    let mut actor = agent.actor().clone();
    push(
        "actor through critic".into(),
        check_params(&mut actor, &grads, GRAD_STEP, |a| {
            let act = a.predict(&states).unwrap();
            let x = ndarray::concatenate(ndarray::Axis(1), &[states.view(), act.view()]).unwrap();
            -critic.predict(&x).unwrap().mean().unwrap()
        }),
    );
    Ok(cases)
}

pub fn check_grad(seed: u64) -> Result<Vec<GradCase>, RunnerError> {
    grad_suite(seed, &|_, _| {})
}

/// First case over tolerance, if any.
pub fn grad_failure(cases: &[GradCase]) -> Option<&GradCase> {
    cases.iter().find(|c| !c.report.passes(GRAD_TOLERANCE))
}
