use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vrmec_agent::train::AgentKind;
use vrmec_runner::run::{self, converged, SweepAxis, SweepSpec, EVAL_FILE};
use vrmec_runner::verify::{check_grad, check_oracle, grad_failure, GRAD_TOLERANCE};
use vrmec_runner::{ExperimentConfig, RunnerError};

#[derive(Parser)]
#[command(name = "vrmec", version, about = "Train and evaluate offloading and caching agents for tiled VR streaming over MEC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; defaults are used for anything not given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// lstm-ddpg, ddpg or random.
    #[arg(long, value_parser = parse_agent)]
    agent: Option<AgentKind>,
    /// Ablation config: 1 (caching, segmentation), 2 (segmentation only), 3 (caching only), 4 (neither).
    #[arg(long)]
    ablation: Option<u8>,
    /// Latency weight in the per-slot cost.
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train the forecaster if needed, then train an agent.
    Train(Common),
    /// Greedy evaluation of a trained run directory; reads its config.toml unless --config is given.
    Eval(Common),
    /// Train and evaluate across one parameter axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// omega, cache_mec, cache_local or ablation.
        #[arg(long, value_parser = parse_axis)]
        axis: SweepAxis,
        /// Comma-separated values; the axis defaults otherwise.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Comma-separated agent kinds.
        #[arg(long, value_delimiter = ',', value_parser = parse_agent, default_value = "lstm-ddpg")]
        agents: Vec<AgentKind>,
        /// Training seeds per point.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
    },
    /// Compare the environment's cost code and action enumeration with the oracle.
    CheckOracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Finite-difference check of every backward rule.
    CheckGrad {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_agent(s: &str) -> Result<AgentKind, String> {
    s.parse().map_err(|e: vrmec_agent::AgentError| e.to_string())
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    s.parse().map_err(|e: RunnerError| e.to_string())
}

fn resolve(c: &Common) -> Result<ExperimentConfig, RunnerError> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    if let Some(agent) = c.agent {
        cfg.agent_kind = agent;
    }
    if let Some(n) = c.ablation {
        cfg.set_ablation(n)?;
    }
    if let Some(omega) = c.omega {
        cfg.env.weights.omega = omega;
    }
    if let Some(e) = c.episodes {
        cfg.agent.episodes = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(c: &Common) -> Result<(), RunnerError> {
    let cfg = resolve(c)?;
    let total = cfg.agent.episodes;
    let every = (total / 20).max(1);
    let agent = run::run_training(&cfg, None, &cfg.output_dir, |m| {
        if (m.episode + 1) % every == 0 || m.episode + 1 == total {
            eprintln!(
                "episode {:>5}/{total}  reward {:>10.3}  latency {:.4} s  energy {:.2} J",
                m.episode + 1,
                m.total_reward,
                m.mean_latency_s,
                m.total_energy_j
            );
        }
    })?;
    if !agent.metrics.is_empty() {
        let c = converged(&agent.metrics, cfg.evaluation.converged_fraction);
        println!(
            "{} trained for {total} episodes; converged reward {:.3}, latency {:.4} s, energy {:.2} J",
            cfg.agent_kind, c.reward, c.latency_s, c.energy_j
        );
    }
    println!("results in {}", cfg.output_dir.display());
    Ok(())
}

fn eval(c: &Common) -> Result<(), RunnerError> {
    let mut c = c.clone();
    if c.config.is_none() {
        if let Some(dir) = &c.out {
            let echo = dir.join(run::CONFIG_FILE);
            if echo.exists() {
                c.config = Some(echo);
            }
        }
    }
    let cfg = resolve(&c)?;
    let agent = run::load_agent(&cfg, &cfg.output_dir)?;
    let report = run::run_eval(&cfg, &agent)?;
    run::write_atomic(&cfg.output_dir.join(EVAL_FILE), &report.to_csv()?)?;
    println!(
        "{}: reward {:.3} ± {:.3}, latency {:.4} ± {:.4} s, energy {:.2} ± {:.2} J ({} seeds × {} episodes)",
        cfg.agent_kind,
        report.reward.mean,
        report.reward.half_width,
        report.latency.mean,
        report.latency.half_width,
        report.energy.mean,
        report.energy.half_width,
        cfg.evaluation.seeds,
        cfg.evaluation.episodes_per_seed
    );
    Ok(())
}

fn sweep(c: &Common, axis: SweepAxis, values: Option<Vec<f64>>, agents: Vec<AgentKind>, seeds: usize) -> Result<(), RunnerError> {
    let cfg = resolve(c)?;
    let spec = SweepSpec {
        axis,
        values: values.unwrap_or_else(|| axis.default_values()),
        agents,
        seeds,
    };
    run::run_sweep(&cfg, &spec, None, |p| {
        println!(
            "{axis}={} {} seed {}: converged reward {:.3}, eval reward {:.3} ± {:.3}",
            p.value, p.agent, p.seed, p.converged_reward, p.eval_reward_mean, p.eval_reward_ci95
        );
    })?;
    println!("summary in {}", cfg.output_dir.join(format!("sweep_{axis}.csv")).display());
    Ok(())
}

fn oracle(c: &Common, trials: usize) -> Result<(), RunnerError> {
    let cfg = resolve(c)?;
    if trials == 0 {
        eprintln!("warning: zero trials requested, nothing was checked");
        return Ok(());
    }
    let r = check_oracle(&cfg, trials, cfg.seed, Some(&cfg.output_dir))?;
    println!(
        "oracle check passed: {} trials, {} enumerated actions, max relative error {:e}",
        r.trials, r.actions_enumerated, r.max_relative_error
    );
    Ok(())
}

fn grad(seed: u64) -> Result<(), RunnerError> {
    let cases = check_grad(seed)?;
    for c in &cases {
        println!("{:<28} {:>5} entries  max relative error {:.2e}", c.name, c.report.checked, c.report.max_relative_error);
    }
    if let Some(bad) = grad_failure(&cases) {
        return Err(RunnerError::Verification(format!(
            "{} exceeds {GRAD_TOLERANCE:e} (worst tensor {}, entry {})",
            bad.name, bad.report.worst.0, bad.report.worst.1
        )));
    }
    println!("gradient check passed");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(c) => train(&c),
        Command::Eval(c) => eval(&c),
        Command::Sweep {
            common,
            axis,
            values,
            agents,
            seeds,
        } => sweep(&common, axis, values, agents, seeds),
        Command::CheckOracle { common, trials } => oracle(&common, trials),
        Command::CheckGrad { seed } => grad(seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
