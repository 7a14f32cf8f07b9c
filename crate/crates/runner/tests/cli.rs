use std::fs;
use std::path::Path;
use std::process::Command;

use vrmec_agent::train::AgentKind;
use vrmec_core::environment::SlotOutcome;
use vrmec_runner::run::{self, SweepAxis, SweepSpec};
use vrmec_runner::verify::{check_oracle_with, grad_failure, grad_suite};
use vrmec_runner::ExperimentConfig;

const SMALL: &str = r#"
seed = 5

[predictor]
hidden = 8
iterations = 20
trace_slots = 200

[agent]
episodes = 3
slots_per_episode = 20
batch_size = 16
hidden = [16, 16]

[evaluation]
seeds = 2
episodes_per_seed = 2
"#;

fn vrmec(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vrmec")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn train_writes_artifacts_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = vrmec(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("metrics.csv")).unwrap());
    let text = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "episode,total_reward,mean_latency_s,p95_latency_s,total_energy_J,mean_cost");
    assert_eq!(lines.len(), 4);
    for f in ["config.toml", "agent.ckpt", "predictor.ckpt", "predictor_loss.csv"] {
        assert!(a.join(f).exists(), "{f}");
    }

    // The echo alone reproduces the run.
    let echo = a.join("config.toml");
    let c = tmp.path().join("c");
    let o = vrmec(&["train", "--config", echo.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read(c.join("metrics.csv")).unwrap(), text.as_bytes());

    let o = vrmec(&["eval", "--config", echo.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let eval = fs::read_to_string(a.join("eval.csv")).unwrap();
    assert_eq!(eval.lines().count(), 1 + 2 * 2);
    assert!(eval.starts_with("seed,episode,total_reward"));
}

#[test]
fn random_agent_skips_neural_training() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("r");
    let o = vrmec(&["train", "--config", &cfg, "--agent", "random", "--episodes", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(!out.join("agent.ckpt").exists());
    assert!(!out.join("predictor.ckpt").exists());
    let text = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
    let echo = ExperimentConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(echo.agent_kind, AgentKind::Random);
    assert_eq!(echo.agent.episodes, 4);

    // eval picks the agent kind up from the run directory.
    let o = vrmec(&["eval", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("random:"));
    assert_eq!(fs::read_to_string(out.join("eval.csv")).unwrap().lines().count(), 1 + 2 * 2);
}

#[test]
fn usage_and_config_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[env.channel]\nbandwith_hz = 1e6\n").unwrap();
    let o = vrmec(&["train", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bandwith_hz"));
    assert_eq!(vrmec(&["train", "--agent", "naf"]).status.code(), Some(1));
    assert_eq!(vrmec(&["sweep", "--axis", "gamma"]).status.code(), Some(1));
    assert_eq!(vrmec(&["train", "--omega", "2"]).status.code(), Some(1));
    assert_eq!(vrmec(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(vrmec(&["--help"]).status.code(), Some(0));
}

#[test]
fn verification_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vrmec(&["check-oracle", "--trials", "200", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = vrmec(&["check-oracle", "--trials", "0"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert!(vrmec(&["check-grad", "--seed", "3"]).status.success());
}

#[test]
fn corrupted_cost_term_is_reported_by_field() {
    let tmp = tempfile::tempdir().unwrap();
    let corrupt = |s: &_, a: &_| {
        let mut o: SlotOutcome = vrmec_core::environment::evaluate_snapshot(s, a)?;
        o.e_tx *= 1.0 + 1e-6;
        Ok(o)
    };
    let err = check_oracle_with(&ExperimentConfig::default(), 50, 1, Some(tmp.path()), &corrupt).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("e_tx"), "{err}");
    let dump = fs::read_dir(tmp.path()).unwrap().next().unwrap().unwrap().path();
    let text = fs::read_to_string(dump).unwrap();
    let value: toml::Value = toml::from_str(&text).unwrap();
    assert!(value.get("snapshot").and_then(|s| s.get("channel_gain")).is_some());
}

#[test]
fn sign_flip_in_a_backward_rule_is_caught() {
    let verdicts: Vec<bool> = (0..5).map(|s| grad_failure(&grad_suite(s, &|_, _| {}).unwrap()).is_none()).collect();
    assert_eq!(verdicts, vec![true; 5]);
    for target in ["lstm", "dense Tanh/Linear", "critic action input", "actor through critic"] {
        let flip = |name: &str, g: &mut [vrmec_nn::Matrix]| {
            if name == target {
                g[0].mapv_inplace(|v| -v);
            }
        };
        let cases = grad_suite(0, &flip).unwrap();
        assert_eq!(grad_failure(&cases).map(|c| c.name.as_str()), Some(target));
    }
}

#[test]
fn single_value_sweep_matches_training() {
    let tmp = tempfile::tempdir().unwrap();
    let mut base = ExperimentConfig::from_toml(SMALL).unwrap();
    base.output_dir = tmp.path().join("sweep");
    let spec = SweepSpec {
        axis: SweepAxis::Omega,
        values: vec![0.8],
        agents: vec![AgentKind::Random, AgentKind::Ddpg],
        seeds: 1,
    };
    let points = run::run_sweep(&base, &spec, None, |_| {}).unwrap();
    assert_eq!(points.len(), 2);
    assert_eq!(points[1].agent, AgentKind::Ddpg);
    let direct = run::run_training(
        &ExperimentConfig {
            agent_kind: AgentKind::Ddpg,
            ..base.clone()
        },
        None,
        &tmp.path().join("direct"),
        |_| {},
    )
    .unwrap();
    let c = run::converged(&direct.metrics, 0.2);
    assert_eq!(points[1].converged_reward, c.reward);
    let summary = fs::read_to_string(base.output_dir.join("sweep_omega.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.lines().nth(2).unwrap().starts_with("omega,0.8,ddpg,5,"));
    assert!(run::point_dir(&base.output_dir, SweepAxis::Omega, 0.8, AgentKind::Ddpg, 5).join("metrics.csv").exists());
}
