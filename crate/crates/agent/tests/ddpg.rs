use ndarray::{array, concatenate, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrmec_agent::action::ActionLayout;
use vrmec_agent::ddpg::{row, AgentConfig, Batch, Ddpg};
use vrmec_agent::replay::{ReplayBuffer, Transition};
use vrmec_nn::gradcheck::{check_input, check_params};
use vrmec_nn::{Activation, Dense, Matrix, Mlp, Params};

const TINY: ActionLayout = ActionLayout {
    fov_tiles: 1,
    local_capacity: 1,
    mec_capacity: 1,
};

fn cfg() -> AgentConfig {
    AgentConfig {
        hidden: vec![8, 6],
        ..AgentConfig::default()
    }
}

fn random_batch(state_dim: usize, action_dim: usize, n: usize, rng: &mut ChaCha8Rng) -> Batch {
    let m = |c: usize, rng: &mut ChaCha8Rng| Array2::from_shape_fn((n, c), |_| rng.random::<f64>());
    Batch {
        states: m(state_dim, rng),
        actions: m(action_dim, rng),
        rewards: (0..n).map(|_| -rng.random::<f64>() * 5.0).collect(),
        next_states: m(state_dim, rng),
    }
}

fn small_agent(seed: u64) -> (Ddpg, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agent = Ddpg::new(4, TINY, &cfg(), &mut rng).unwrap();
    (agent, rng)
}

/// Plain critic loss, written out independently of the agent code.
fn critic_mse(critic: &Mlp, batch: &Batch, y: &[f64]) -> f64 {
    let x = concatenate(Axis(1), &[batch.states.view(), batch.actions.view()]).unwrap();
    let q = critic.predict(&x).unwrap();
    q.column(0).iter().zip(y).map(|(q, y)| (y - q).powi(2)).sum::<f64>() / y.len() as f64
}

fn neg_mean_q(actor: &Mlp, critic: &Mlp, states: &Matrix) -> f64 {
    let a = actor.predict(states).unwrap();
    let x = concatenate(Axis(1), &[states.view(), a.view()]).unwrap();
    -critic.predict(&x).unwrap().mean().unwrap()
}

#[test]
fn td_targets_reduce_to_reward() {
    let (mut agent, mut rng) = small_agent(1);
    let batch = random_batch(4, TINY.len(), 5, &mut rng);
    agent.set_discount(0.0);
    let y = agent.td_targets(&batch).unwrap();
    for (y, r) in y.iter().zip(&batch.rewards) {
        assert!((y - r).abs() < 1e-12);
    }

    // A zero target critic gives y = r at any discount.
    let actor = agent.actor().clone();
    let critic = Mlp {
        layers: vec![Dense::zeros(4 + TINY.len(), 1, Activation::Linear)],
        dropout: 0.0,
    };
    let agent = Ddpg::from_networks(actor, critic, TINY, &cfg()).unwrap();
    assert_eq!(agent.td_targets(&batch).unwrap(), batch.rewards);
}

#[test]
fn td_targets_by_hand() {
    // Actor with zero weights and bias: every output is sigmoid(0) = 0.5.
    let actor = Mlp {
        layers: vec![Dense::zeros(2, TINY.len(), Activation::Sigmoid)],
        dropout: 0.0,
    };
    let mut critic = Dense::zeros(2 + TINY.len(), 1, Activation::Linear);
    critic.weight[[0, 0]] = 2.0;
    critic.weight[[0, 1]] = -1.0;
    critic.weight[[0, 2]] = 4.0;
    critic.weight[[0, 11]] = 1.0;
    critic.bias[[0, 0]] = 0.5;
    let critic = Mlp {
        layers: vec![critic],
        dropout: 0.0,
    };
    let agent = Ddpg::from_networks(actor, critic, TINY, &cfg()).unwrap();
    let batch = Batch {
        states: Array2::zeros((2, 2)),
        actions: Array2::zeros((2, TINY.len())),
        rewards: vec![-1.0, -3.0],
        next_states: array![[1.0, 2.0], [0.5, -1.0]],
    };
    // Q'(s', 0.5·1) = 2·s1 − s2 + 4·0.5 + 0.5 + 0.5 = 2·s1 − s2 + 3.
    // Row 1: 2 − 2 + 3 = 3;  row 2: 1 + 1 + 3 = 5.
    let y = agent.td_targets(&batch).unwrap();
    assert!((y[0] - (-1.0 + 0.85 * 3.0)).abs() < 1e-12);
    assert!((y[1] - (-3.0 + 0.85 * 5.0)).abs() < 1e-12);
    let empty = Batch::from_transitions(&[]);
    assert!(empty.is_err());
}

#[test]
fn critic_update_is_zero_at_fixed_point() {
    let (mut agent, mut rng) = small_agent(2);
    let batch = random_batch(4, TINY.len(), 16, &mut rng);
    let y = agent.q_values(&batch.states, &batch.actions).unwrap();
    let before = agent.critic().clone();
    let loss = agent.update_critic(&batch, &y).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(agent.critic(), &before);
}

#[test]
fn critic_loss_decreases_on_frozen_batch() {
    let (mut agent, mut rng) = small_agent(3);
    let batch = random_batch(4, TINY.len(), 32, &mut rng);
    let y = agent.td_targets(&batch).unwrap();
    let first = agent.update_critic(&batch, &y).unwrap();
    let mut last = first;
    for _ in 0..100 {
        last = agent.update_critic(&batch, &y).unwrap();
    }
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn critic_gradients_match_finite_differences() {
    for seed in 0..5 {
        let (agent, mut rng) = small_agent(10 + seed);
        assert!(agent.critic().parameter_count() <= 1000);
        let batch = random_batch(4, TINY.len(), 8, &mut rng);
        let y: Vec<f64> = (0..8).map(|_| rng.random::<f64>() - 0.5).collect();
        let (_, grads) = agent.critic_loss_grads(&batch, &y).unwrap();
        let mut critic = agent.critic().clone();
        let report = check_params(&mut critic, &grads, 1e-6, |c| critic_mse(c, &batch, &y));
        assert!(report.passes(1e-4), "seed {seed}: {report:?}");

        let da = agent.critic_action_gradient(&batch.states, &batch.actions).unwrap();
        let report = check_input(&batch.actions, &da, 1e-6, |a| {
            let x = concatenate(Axis(1), &[batch.states.view(), a.view()]).unwrap();
            agent.critic().predict(&x).unwrap().sum()
        });
        assert!(report.passes(1e-4), "seed {seed}: {report:?}");
    }
}

#[test]
fn actor_gradients_match_finite_differences() {
    for seed in 0..5 {
        let (agent, mut rng) = small_agent(20 + seed);
        let states = Array2::from_shape_fn((8, 4), |_| rng.random::<f64>());
        let grads = agent.actor_grads(&states).unwrap();
        let mut actor = agent.actor().clone();
        let report = check_params(&mut actor, &grads, 1e-6, |a| neg_mean_q(a, agent.critic(), &states));
        assert!(report.passes(1e-4), "seed {seed}: {report:?}");
    }
}

#[test]
fn constant_critic_gives_zero_actor_gradient() {
    let (agent, mut rng) = small_agent(4);
    let mut critic = agent.critic().clone();
    for layer in &mut critic.layers {
        layer.weight.fill(0.0);
    }
    let mut agent = Ddpg::from_networks(agent.actor().clone(), critic, TINY, &cfg()).unwrap();
    let states = Array2::from_shape_fn((8, 4), |_| rng.random::<f64>());
    let before = agent.actor().clone();
    let norm = agent.update_actor(&states).unwrap();
    assert_eq!(norm, 0.0);
    assert_eq!(agent.actor(), &before);
}

#[test]
fn linear_critic_gives_mean_actor_jacobian() {
    // Q(s, a) = Σ a, so the ascent direction is the batch-mean Jacobian of Σπ.
    let (agent, mut rng) = small_agent(5);
    let mut dense = Dense::zeros(4 + TINY.len(), 1, Activation::Linear);
    for j in 4..4 + TINY.len() {
        dense.weight[[0, j]] = 1.0;
    }
    let critic = Mlp {
        layers: vec![dense],
        dropout: 0.0,
    };
    let agent = Ddpg::from_networks(agent.actor().clone(), critic, TINY, &cfg()).unwrap();
    let states = Array2::from_shape_fn((6, 4), |_| rng.random::<f64>());
    let grads = agent.actor_grads(&states).unwrap();
    let mut actor = agent.actor().clone();
    let report = check_params(&mut actor, &grads, 1e-6, |a| -a.predict(&states).unwrap().sum() / 6.0);
    assert!(report.passes(1e-4), "{report:?}");
}

#[test]
fn actor_step_does_not_lower_mean_q() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(30 + seed);
        let mut agent = Ddpg::new(
            4,
            TINY,
            &AgentConfig {
                actor_lr: 1e-5,
                ..cfg()
            },
            &mut rng,
        )
        .unwrap();
        let states = Array2::from_shape_fn((16, 4), |_| rng.random::<f64>());
        let critic = agent.critic().clone();
        let before = agent.mean_q(&states).unwrap();
        agent.update_actor(&states).unwrap();
        assert_eq!(agent.critic(), &critic);
        assert!(agent.mean_q(&states).unwrap() >= before);
    }
}

#[test]
fn exploration_noise_statistics() {
    let (agent, mut rng) = small_agent(6);
    let state = [0.3, 0.1, 0.9, 0.5];
    let greedy = agent.act(&state).unwrap();
    assert_eq!(agent.select_action(&state, 0.0, &mut rng).unwrap(), greedy);

    // Zero actor weights pin every output at 0.5, far from the clamp.
    let mut actor = agent.actor().clone();
    for layer in &mut actor.layers {
        layer.weight.fill(0.0);
        layer.bias.fill(0.0);
    }
    let flat = Ddpg::from_networks(actor, agent.critic().clone(), TINY, &cfg()).unwrap();
    let n = 100_000;
    let sigma = 0.05;
    let mut sum = vec![0.0; TINY.len()];
    let mut sq = vec![0.0; TINY.len()];
    for _ in 0..n {
        let a = flat.select_action(&state, sigma, &mut rng).unwrap();
        for (j, v) in a.iter().enumerate() {
            sum[j] += v - 0.5;
            sq[j] += (v - 0.5) * (v - 0.5);
        }
    }
    for j in 0..TINY.len() {
        let mean = sum[j] / n as f64;
        let std = (sq[j] / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 4.0 * sigma / (n as f64).sqrt(), "mean {mean}");
        assert!((std - sigma).abs() < 4.0 * sigma / (2.0 * n as f64).sqrt(), "std {std}");
    }

    for _ in 0..1000 {
        let a = agent.select_action(&state, 1.0, &mut rng).unwrap();
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn targets_track_online_by_soft_rate() {
    let (mut agent, mut rng) = small_agent(7);
    let batch = random_batch(4, TINY.len(), 8, &mut rng);
    let actor_target = agent.actor_target().clone();
    let y = agent.td_targets(&batch).unwrap();
    agent.update_critic(&batch, &y).unwrap();
    agent.update_actor(&batch.states).unwrap();
    // Targets are untouched until the soft update runs.
    assert_eq!(agent.actor_target(), &actor_target);
    agent.soft_update_targets().unwrap();
    for ((t, o), old) in agent
        .actor_target()
        .tensors()
        .iter()
        .zip(agent.actor().tensors())
        .zip(actor_target.tensors())
    {
        let expect = o * 0.001 + old * 0.999;
        assert!((*t - &expect).iter().all(|d| d.abs() < 1e-15));
    }
}

#[test]
fn checkpoint_tensors_round_trip() {
    let (a, _) = small_agent(8);
    let (mut b, _) = small_agent(9);
    let saved: Vec<Matrix> = a.tensors().into_iter().cloned().collect();
    b.load_tensors(&saved).unwrap();
    assert_eq!(b.actor(), a.actor());
    assert_eq!(b.critic_target(), a.critic_target());
    assert!(b.load_tensors(&saved[1..]).is_err());
}

#[test]
fn replay_sampling_is_uniform() {
    let mut buf = ReplayBuffer::new(100);
    for i in 0..250 {
        buf.push(Transition {
            state: vec![i as f64],
            action: vec![],
            reward: 0.0,
            next_state: vec![],
        });
    }
    assert_eq!(buf.len(), 100);
    let oldest: Vec<f64> = buf.iter().take(2).map(|t| t.state[0]).collect();
    assert_eq!(oldest, vec![150.0, 151.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 1_000_000;
    let mut counts = vec![0usize; 100];
    for i in buf.sample_indices(n, &mut rng) {
        counts[i] += 1;
    }
    let e = n as f64 / 100.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    // Upper 1% point of chi-squared with 99 degrees of freedom.
    assert!(chi2 < 134.642, "chi2 {chi2}");
}

#[test]
fn batch_from_transitions_layout() {
    let t = |k: f64| Transition {
        state: vec![k, k + 1.0],
        action: vec![k * 10.0],
        reward: -k,
        next_state: vec![k + 2.0, k + 3.0],
    };
    let (a, b) = (t(1.0), t(5.0));
    let batch = Batch::from_transitions(&[&a, &b]).unwrap();
    assert_eq!(batch.states, array![[1.0, 2.0], [5.0, 6.0]]);
    assert_eq!(batch.actions, array![[10.0], [50.0]]);
    assert_eq!(batch.rewards, vec![-1.0, -5.0]);
    assert_eq!(batch.next_states.row(1), row(&[7.0, 8.0]).row(0));
}
