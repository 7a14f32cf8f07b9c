//! Actor-critic networks, their targets, and the three update rules.

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use vrmec_nn::{soft_update, Activation, Adam, Matrix, Mlp, Params};

use crate::action::ActionLayout;
use crate::replay::Transition;
use crate::AgentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Discount `χ`.
    pub discount: f64,
    /// Soft-update rate `ϑ`.
    pub soft_update: f64,
    /// Soft-update period `ψ`, in gradient steps.
    pub target_interval: usize,
    /// Exploration std at the first episode.
    pub noise_std: f64,
    /// Exploration std at the last episode; decay is exponential in between.
    pub noise_std_final: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub episodes: usize,
    pub slots_per_episode: usize,
    /// Hidden widths shared by actor and critic.
    pub hidden: Vec<usize>,
    /// Multiplier applied to the channel gain in the state vector.
    pub gain_scale: f64,
    /// Multiplier applied to rewards before learning; logs keep raw rewards.
    pub reward_scale: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            discount: 0.85,
            soft_update: 0.001,
            target_interval: 1,
            noise_std: 0.1,
            noise_std_final: 0.01,
            batch_size: 64,
            replay_capacity: 100_000,
            episodes: 1000,
            slots_per_episode: 100,
            hidden: vec![64, 64],
            gain_scale: 1e4,
            reward_scale: 1.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad("discount must lie in (0, 1)");
        }
        if !(self.soft_update > 0.0 && self.soft_update < 1.0) {
            return bad("soft_update must lie in (0, 1)");
        }
        if !(self.noise_std >= 0.0 && self.noise_std_final >= 0.0) {
            return bad("noise std must be non-negative");
        }
        if self.target_interval == 0 || self.batch_size == 0 || self.replay_capacity == 0 {
            return bad("target_interval, batch_size and replay_capacity must be positive");
        }
        if self.slots_per_episode == 0 {
            return bad("slots_per_episode must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be non-empty and positive");
        }
        if !(self.gain_scale > 0.0 && self.reward_scale > 0.0) {
            return bad("gain_scale and reward_scale must be positive");
        }
        Ok(())
    }

    /// Exploration std for a 0-based episode index.
    pub fn noise_at(&self, episode: usize) -> f64 {
        if self.episodes <= 1 || self.noise_std == 0.0 || self.noise_std_final == 0.0 {
            return if episode == 0 { self.noise_std } else { self.noise_std_final };
        }
        let frac = episode.min(self.episodes - 1) as f64 / (self.episodes - 1) as f64;
        self.noise_std * (self.noise_std_final / self.noise_std).powf(frac)
    }
}

/// Minibatch in matrix form.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Result<Self, AgentError> {
        if ts.is_empty() {
            return Err(AgentError::Data("empty batch".into()));
        }
        let rows = |f: &dyn Fn(&Transition) -> &Vec<f64>| -> Result<Matrix, AgentError> {
            let w = f(ts[0]).len();
            let mut flat = Vec::with_capacity(ts.len() * w);
            for t in ts {
                if f(t).len() != w {
                    return Err(AgentError::Data("ragged transition vectors".into()));
                }
                flat.extend_from_slice(f(t));
            }
            Ok(Array2::from_shape_vec((ts.len(), w), flat).expect("shape checked"))
        };
        Ok(Self {
            states: rows(&|t| &t.state)?,
            actions: rows(&|t| &t.action)?,
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_states: rows(&|t| &t.next_state)?,
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

pub fn row(v: &[f64]) -> Matrix {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row vector")
}

fn joined(states: &Matrix, actions: &Matrix) -> Matrix {
    concatenate(Axis(1), &[states.view(), actions.view()]).expect("matching batch sizes")
}

#[derive(Debug, Clone)]
pub struct Ddpg {
    state_dim: usize,
    layout: ActionLayout,
    actor: Mlp,
    critic: Mlp,
    actor_target: Mlp,
    critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    discount: f64,
    tau: f64,
    target_interval: usize,
    updates: u64,
}

impl Ddpg {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, layout: ActionLayout, cfg: &AgentConfig, rng: &mut R) -> Result<Self, AgentError> {
        cfg.validate()?;
        let mut sizes = vec![state_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(layout.len());
        let actor = Mlp::new(&sizes, Activation::Relu, Activation::Sigmoid, rng);
        sizes[0] = state_dim + layout.len();
        *sizes.last_mut().unwrap() = 1;
        let critic = Mlp::new(&sizes, Activation::Relu, Activation::Linear, rng);
        Self::from_networks(actor, critic, layout, cfg)
    }

    /// Wraps given networks; targets start as exact copies.
    pub fn from_networks(actor: Mlp, critic: Mlp, layout: ActionLayout, cfg: &AgentConfig) -> Result<Self, AgentError> {
        cfg.validate()?;
        if actor.outputs() != layout.len() || critic.inputs() != actor.inputs() + layout.len() || critic.outputs() != 1 {
            return Err(AgentError::Config("actor/critic widths do not match the action layout".into()));
        }
        Ok(Self {
            state_dim: actor.inputs(),
            layout,
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            actor_opt: Adam::new(cfg.actor_lr),
            critic_opt: Adam::new(cfg.critic_lr),
            discount: cfg.discount,
            tau: cfg.soft_update,
            target_interval: cfg.target_interval,
            updates: 0,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn layout(&self) -> ActionLayout {
        self.layout
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn critic_target(&self) -> &Mlp {
        &self.critic_target
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    pub fn set_discount(&mut self, discount: f64) {
        self.discount = discount;
    }

    pub fn all_finite(&self) -> bool {
        [&self.actor, &self.critic, &self.actor_target, &self.critic_target]
            .iter()
            .all(|n| n.all_finite())
    }

    /// Greedy actor output for one state.
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.actor.predict(&row(state))?.into_raw_vec_and_offset().0)
    }

    /// Actor output plus i.i.d. `N(0, σ²)` noise, clamped to `[0, 1]`.
    pub fn select_action<R: Rng + ?Sized>(&self, state: &[f64], noise_std: f64, rng: &mut R) -> Result<Vec<f64>, AgentError> {
        let mut a = self.act(state)?;
        if noise_std > 0.0 {
            add_noise(&mut a, noise_std, rng);
        }
        Ok(a)
    }

    pub fn q_values(&self, states: &Matrix, actions: &Matrix) -> Result<Vec<f64>, AgentError> {
        Ok(self.critic.predict(&joined(states, actions))?.column(0).to_vec())
    }

    /// `y_i = r_i + χ·Q'(s'_i, π'(s'_i))`.
    pub fn td_targets(&self, batch: &Batch) -> Result<Vec<f64>, AgentError> {
        if batch.is_empty() {
            return Err(AgentError::Data("empty batch".into()));
        }
        let next_a = self.actor_target.predict(&batch.next_states)?;
        let q = self.critic_target.predict(&joined(&batch.next_states, &next_a))?;
        Ok(batch.rewards.iter().zip(q.column(0)).map(|(r, q)| r + self.discount * q).collect())
    }

    /// Critic loss `mean (y − Q)²` and its parameter gradients.
    pub fn critic_loss_grads(&self, batch: &Batch, y: &[f64]) -> Result<(f64, Vec<Matrix>), AgentError> {
        if y.len() != batch.len() {
            return Err(AgentError::Data("target count differs from batch size".into()));
        }
        let (q, tape) = self.critic.forward(&joined(&batch.states, &batch.actions), None)?;
        let y = Array2::from_shape_vec((y.len(), 1), y.to_vec()).expect("column");
        let (loss, dq) = vrmec_nn::loss::mse(&q, &y)?;
        Ok((loss, self.critic.backward(&tape, &dq)?.1))
    }

    /// One Adam step on the critic; returns the loss before the step.
    pub fn update_critic(&mut self, batch: &Batch, y: &[f64]) -> Result<f64, AgentError> {
        let (loss, grads) = self.critic_loss_grads(batch, y)?;
        self.critic_opt.step(&mut self.critic, &grads)?;
        Ok(loss)
    }

    /// `∂Q/∂a` at each row.
    pub fn critic_action_gradient(&self, states: &Matrix, actions: &Matrix) -> Result<Matrix, AgentError> {
        let (q, tape) = self.critic.forward(&joined(states, actions), None)?;
        let (dx, _) = self.critic.backward(&tape, &Array2::ones(q.dim()))?;
        Ok(dx.slice(s![.., self.state_dim..]).to_owned())
    }

    pub fn mean_q(&self, states: &Matrix) -> Result<f64, AgentError> {
        let a = self.actor.predict(states)?;
        let q = self.q_values(states, &a)?;
        Ok(q.iter().sum::<f64>() / q.len() as f64)
    }

    /// Gradient of `−mean_i Q(s_i, π(s_i))` w.r.t. the actor's parameters,
    /// chained through the critic's action input.
    pub fn actor_grads(&self, states: &Matrix) -> Result<Vec<Matrix>, AgentError> {
        let (a, tape) = self.actor.forward(states, None)?;
        let n = states.nrows() as f64;
        let da = self.critic_action_gradient(states, &a)? * (-1.0 / n);
        Ok(self.actor.backward(&tape, &da)?.1)
    }

    /// One Adam ascent step on the actor; returns the gradient norm.
    pub fn update_actor(&mut self, states: &Matrix) -> Result<f64, AgentError> {
        let grads = self.actor_grads(states)?;
        let norm = grads.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
        self.actor_opt.step(&mut self.actor, &grads)?;
        Ok(norm)
    }

    pub fn soft_update_targets(&mut self) -> Result<(), AgentError> {
        soft_update(&mut self.actor_target, &self.actor, self.tau)?;
        soft_update(&mut self.critic_target, &self.critic, self.tau)?;
        Ok(())
    }

    /// Critic step, actor step, and a target update every `ψ` calls.
    /// Returns the critic loss.
    pub fn train_step(&mut self, batch: &Batch) -> Result<f64, AgentError> {
        let y = self.td_targets(batch)?;
        let loss = self.update_critic(batch, &y)?;
        self.update_actor(&batch.states)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.target_interval as u64) {
            self.soft_update_targets()?;
        }
        Ok(loss)
    }

    /// Actor, critic, and both targets, in that order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut v = self.actor.tensors();
        v.extend(self.critic.tensors());
        v.extend(self.actor_target.tensors());
        v.extend(self.critic_target.tensors());
        v
    }

    pub fn load_tensors(&mut self, src: &[Matrix]) -> Result<(), AgentError> {
        let counts = [
            self.actor.tensors().len(),
            self.critic.tensors().len(),
            self.actor_target.tensors().len(),
            self.critic_target.tensors().len(),
        ];
        if src.len() != counts.iter().sum::<usize>() {
            return Err(AgentError::Data(format!(
                "checkpoint holds {} tensors, agent has {}",
                src.len(),
                counts.iter().sum::<usize>()
            )));
        }
        let mut at = 0;
        for (net, n) in [&mut self.actor, &mut self.critic, &mut self.actor_target, &mut self.critic_target]
            .into_iter()
            .zip(counts)
        {
            net.load(&src[at..at + n])?;
            at += n;
        }
        Ok(())
    }
}

pub fn add_noise<R: Rng + ?Sized>(a: &mut [f64], std: f64, rng: &mut R) {
    let normal = Normal::new(0.0, std).expect("finite std");
    for x in a.iter_mut() {
        *x = (*x + normal.sample(rng)).clamp(0.0, 1.0);
    }
}
