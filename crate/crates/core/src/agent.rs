//! Twin-critic deterministic actor-critic (TD3-style) and behaviour cloning.
//!
//! The actor ends in `tanh`, rescaled onto the action box. Critics see
//! `[s | a]` and output a scalar. Rewards are not stored with transitions:
//! a [`RewardModel`] recomputes them for every sampled batch.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::buffers::Batch;
use crate::discriminator::Discriminator;
use crate::envs::{EnvSpec, SimRng};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, Activation, Adam, Matrix, Mlp};

/// Produces one reward per batch row.
pub trait RewardModel {
    fn rewards(&self, batch: &Batch) -> Result<Vec<f64>>;
}

impl<T: RewardModel + ?Sized> RewardModel for &T {
    fn rewards(&self, batch: &Batch) -> Result<Vec<f64>> {
        (**self).rewards(batch)
    }
}

/// The environment's own episodic reward, as stored in the transitions.
#[derive(Debug, Clone, Copy, Default)]
pub struct EpisodicReward;

impl RewardModel for EpisodicReward {
    fn rewards(&self, batch: &Batch) -> Result<Vec<f64>> {
        Ok(batch.r_e.clone())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantReward(pub f64);

impl RewardModel for ConstantReward {
    fn rewards(&self, batch: &Batch) -> Result<Vec<f64>> {
        Ok(vec![self.0; batch.len()])
    }
}

/// `lambda * r_e + r'`: shaped reward plus a scaled episodic reward.
#[derive(Debug, Clone, Copy)]
pub struct MixedReward<'a> {
    pub disc: &'a Discriminator,
    pub lambda: f64,
}

impl RewardModel for MixedReward<'_> {
    fn rewards(&self, batch: &Batch) -> Result<Vec<f64>> {
        let mut r = self.disc.rewards(batch)?;
        for (r, e) in r.iter_mut().zip(&batch.r_e) {
            *r += self.lambda * e;
        }
        Ok(r)
    }
}

/// Rewards from an arbitrary function of the batch.
pub struct FnReward<F>(pub F);

impl<F: Fn(&Batch) -> Vec<f64>> RewardModel for FnReward<F> {
    fn rewards(&self, batch: &Batch) -> Result<Vec<f64>> {
        Ok((self.0)(batch))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub explore_noise: f64,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub policy_delay: usize,
    /// `false` falls back to a single critic without the clipped double-Q target.
    pub twin_critics: bool,
    pub actor_final_scale: f64,
    /// Weight of `mean ‖z‖²` on the actor's pre-`tanh` outputs `z`. Keeps the
    /// policy out of the flat tails of `tanh`, where the critic's action
    /// gradient no longer reaches the weights.
    pub actor_preact_reg: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            hidden: vec![64, 64],
            actor_lr: 1e-4,
            critic_lr: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            explore_noise: 0.1,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            policy_delay: 2,
            twin_critics: true,
            actor_final_scale: 1e-2,
            actor_preact_reg: 0.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if self.explore_noise < 0.0 || self.target_noise < 0.0 || self.target_noise_clip < 0.0 {
            return Err(Error::config("noise scales must be non-negative"));
        }
        if self.policy_delay == 0 {
            return Err(Error::config("policy_delay must be at least 1"));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(Error::config("learning rates must be positive"));
        }
        if !(self.actor_preact_reg >= 0.0 && self.actor_preact_reg.is_finite()) {
            return Err(Error::config("actor_preact_reg must be finite and non-negative"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Explore,
    Evaluate,
}

#[derive(Debug, Clone)]
pub struct Actor {
    net: Mlp,
    target: Mlp,
    opt: Adam,
    low: Vec<f64>,
    high: Vec<f64>,
    center: Vec<f64>,
    half: Vec<f64>,
    pub explore_noise: f64,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub preact_reg: f64,
}

impl Actor {
    pub fn new(spec: &EnvSpec, cfg: &AgentConfig, rng: &mut SimRng) -> Result<Self> {
        let mut dims = vec![spec.state_dim];
        dims.extend(&cfg.hidden);
        dims.push(spec.action_dim);
        let mut acts = vec![Activation::Relu; cfg.hidden.len()];
        acts.push(Activation::Tanh);
        let mut net = Mlp::new(&dims, &acts, rng)?;
        net.scale_layer(cfg.hidden.len(), cfg.actor_final_scale);
        Actor::from_network(net, spec, cfg)
    }

    /// Wraps an existing `tanh`-output network.
    pub fn from_network(net: Mlp, spec: &EnvSpec, cfg: &AgentConfig) -> Result<Self> {
        if net.input_dim() != spec.state_dim || net.output_dim() != spec.action_dim {
            return Err(Error::config("actor network does not match the environment dimensions"));
        }
        if net.activations().last() != Some(&Activation::Tanh) {
            return Err(Error::config("actor network must end in tanh"));
        }
        let center = spec.action_low.iter().zip(&spec.action_high).map(|(l, h)| (l + h) / 2.0).collect();
        let half = spec.action_low.iter().zip(&spec.action_high).map(|(l, h)| (h - l) / 2.0).collect();
        Ok(Actor {
            target: net.clone(),
            opt: Adam::for_mlp(&net, cfg.actor_lr),
            net,
            low: spec.action_low.clone(),
            high: spec.action_high.clone(),
            center,
            half,
            explore_noise: cfg.explore_noise,
            target_noise: cfg.target_noise,
            target_noise_clip: cfg.target_noise_clip,
            preact_reg: cfg.actor_preact_reg,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    fn rescale(&self, squashed: &mut Matrix) {
        for r in 0..squashed.rows() {
            for ((v, c), h) in squashed.row_mut(r).iter_mut().zip(&self.center).zip(&self.half) {
                *v = c + h * *v;
            }
        }
    }

    fn actions_of(&self, net: &Mlp, states: &Matrix) -> Result<Matrix> {
        let mut out = net.predict(states)?;
        self.rescale(&mut out);
        Ok(out)
    }

    /// Deterministic actions `π(s)` for a batch of states.
    pub fn actions(&self, states: &Matrix) -> Result<Matrix> {
        self.actions_of(&self.net, states)
    }

    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.actions(&Matrix::row_vector(state))?.into_vec())
    }

    /// `Evaluate` returns `π(s)`; `Explore` adds Gaussian noise with standard
    /// deviation `explore_noise` times the half-width of each action
    /// dimension, then clips to the bounds.
    pub fn select_action(&self, state: &[f64], mode: ActionMode, rng: &mut SimRng) -> Result<Vec<f64>> {
        let mut a = self.act(state)?;
        if mode == ActionMode::Explore && self.explore_noise > 0.0 {
            for (i, v) in a.iter_mut().enumerate() {
                let n: f64 = rng.sample(StandardNormal);
                *v += self.explore_noise * self.half[i] * n;
            }
        }
        for (i, v) in a.iter_mut().enumerate() {
            *v = v.clamp(self.low[i], self.high[i]);
        }
        Ok(a)
    }

    /// Smoothed target actions `clip(π̄(s') + clip(ε, -c, c))`.
    fn target_actions(&self, next_states: &Matrix, rng: &mut SimRng) -> Result<Matrix> {
        let mut a = self.actions_of(&self.target, next_states)?;
        if self.target_noise > 0.0 {
            for r in 0..a.rows() {
                for (i, v) in a.row_mut(r).iter_mut().enumerate() {
                    let n: f64 = rng.sample(StandardNormal);
                    let c = self.target_noise_clip * self.half[i];
                    *v += (self.target_noise * self.half[i] * n).clamp(-c, c);
                }
            }
        }
        for r in 0..a.rows() {
            for (i, v) in a.row_mut(r).iter_mut().enumerate() {
                *v = v.clamp(self.low[i], self.high[i]);
            }
        }
        Ok(a)
    }

    /// Gradient of `-mean_i q1(s_i, π(s_i)) + preact_reg * mean_i ‖z_i‖²`
    /// with respect to the actor parameters, `z` being the pre-`tanh` output.
    pub fn policy_gradient(&self, critic: &Critic, states: &Matrix) -> Result<Vec<f64>> {
        let n = states.rows();
        if n == 0 {
            return Err(Error::usage("actor update needs at least one state"));
        }
        let (squashed, actor_cache) = self.net.forward(states)?;
        let mut actions = squashed.clone();
        self.rescale(&mut actions);
        let (_, q_cache) = critic.q1.forward(&states.hcat(&actions))?;
        let upstream = Matrix::from_vec(n, 1, vec![-1.0 / n as f64; n])?;
        let dq_dx = critic.q1.input_gradient(&q_cache, &upstream)?;
        let mut dq_da = dq_dx.columns(states.cols(), actions.cols());
        for r in 0..n {
            for (v, h) in dq_da.row_mut(r).iter_mut().zip(&self.half) {
                *v *= h;
            }
        }
        let (grads, _) = if self.preact_reg > 0.0 {
            let mut dz = self.net.output_preactivation(&actor_cache)?;
            let k = 2.0 * self.preact_reg / n as f64;
            dz.map_inplace(|z| k * z);
            self.net.backward_with_preactivation_grad(&actor_cache, &dq_da, &dz)?
        } else {
            self.net.backward(&actor_cache, &dq_da)?
        };
        Ok(grads.0)
    }

    /// One ascent step on `mean q1(s, π(s))`.
    pub fn update(&mut self, critic: &Critic, states: &Matrix) -> Result<()> {
        let grads = self.policy_gradient(critic, states)?;
        self.opt.step(self.net.params_mut(), &grads)
    }

    /// One step of mean squared error regression of `π(s)` onto the batch
    /// actions. Returns the pre-step MSE.
    pub fn bc_update(&mut self, batch: &Batch) -> Result<f64> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::usage("behaviour cloning needs a non-empty batch"));
        }
        let ad = batch.actions.cols();
        let (squashed, cache) = self.net.forward(&batch.states)?;
        let mut pred = squashed.clone();
        self.rescale(&mut pred);
        let denom = (n * ad) as f64;
        let mut mse = 0.0;
        let mut upstream = Matrix::zeros(n, ad);
        for r in 0..n {
            for i in 0..ad {
                let diff = pred[(r, i)] - batch.actions[(r, i)];
                mse += diff * diff / denom;
                upstream[(r, i)] = 2.0 * diff * self.half[i] / denom;
            }
        }
        let (grads, _) = self.net.backward(&cache, &upstream)?;
        self.opt.step(self.net.params_mut(), &grads)?;
        Ok(mse)
    }

    pub fn soft_update_target(&mut self, tau: f64) {
        self.target.soft_update_from(&self.net, tau);
    }
}

#[derive(Debug, Clone)]
pub struct Critic {
    q1: Mlp,
    q2: Mlp,
    q1_target: Mlp,
    q2_target: Mlp,
    opt1: Adam,
    opt2: Adam,
    pub gamma: f64,
    pub tau: f64,
    twin: bool,
}

impl Critic {
    pub fn new(spec: &EnvSpec, cfg: &AgentConfig, rng: &mut SimRng) -> Result<Self> {
        let mut dims = vec![spec.state_dim + spec.action_dim];
        dims.extend(&cfg.hidden);
        dims.push(1);
        let mut acts = vec![Activation::Relu; cfg.hidden.len()];
        acts.push(Activation::Identity);
        let q1 = Mlp::new(&dims, &acts, rng)?;
        let q2 = Mlp::new(&dims, &acts, rng)?;
        Ok(Critic {
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            opt1: Adam::for_mlp(&q1, cfg.critic_lr),
            opt2: Adam::for_mlp(&q2, cfg.critic_lr),
            q1,
            q2,
            gamma: cfg.gamma,
            tau: cfg.tau,
            twin: cfg.twin_critics,
        })
    }

    pub fn q1(&self) -> &Mlp {
        &self.q1
    }

    pub fn q2(&self) -> &Mlp {
        &self.q2
    }

    pub fn q1_mut(&mut self) -> &mut Mlp {
        &mut self.q1
    }

    pub fn targets(&self) -> (&Mlp, &Mlp) {
        (&self.q1_target, &self.q2_target)
    }

    pub fn is_twin(&self) -> bool {
        self.twin
    }

    /// `q1(s, a)` per row.
    pub fn q_values(&self, states: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
        Ok(self.q1.predict(&states.hcat(actions))?.into_vec())
    }

    /// TD targets `r + γ (1 - i) min(q̄1, q̄2)(s', ã')`.
    pub fn td_targets(&self, actor: &Actor, rewards: &[f64], batch: &Batch, rng: &mut SimRng) -> Result<Vec<f64>> {
        if rewards.len() != batch.len() {
            return Err(Error::config("reward count does not match the batch"));
        }
        let next_a = actor.target_actions(&batch.next_states, rng)?;
        let next_sa = batch.next_states.hcat(&next_a);
        let t1 = self.q1_target.predict(&next_sa)?;
        let t2 = if self.twin {
            Some(self.q2_target.predict(&next_sa)?)
        } else {
            None
        };
        let y = (0..batch.len())
            .map(|i| {
                let next = match &t2 {
                    Some(t2) => t1.data()[i].min(t2.data()[i]),
                    None => t1.data()[i],
                };
                let mask = if batch.terminal[i] { 0.0 } else { 1.0 };
                rewards[i] + self.gamma * mask * next
            })
            .collect();
        Ok(y)
    }

    fn regress(net: &mut Mlp, opt: &mut Adam, sa: &Matrix, y: &[f64]) -> Result<f64> {
        let n = y.len();
        let (q, cache) = net.forward(sa)?;
        let mut loss = 0.0;
        let mut upstream = Matrix::zeros(n, 1);
        for (i, (&qi, &yi)) in q.data().iter().zip(y).enumerate() {
            let diff = qi - yi;
            loss += diff * diff / n as f64;
            upstream.data_mut()[i] = 2.0 * diff / n as f64;
        }
        let (grads, _) = net.backward(&cache, &upstream)?;
        opt.step(net.params_mut(), &grads)?;
        Ok(loss)
    }

    /// One gradient step on both critics. Returns the mean squared TD error
    /// of the first critic before the step.
    pub fn update(&mut self, actor: &Actor, reward: &dyn RewardModel, batch: &Batch, rng: &mut SimRng) -> Result<f64> {
        let rewards = reward.rewards(batch)?;
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::numerical("non-finite reward in critic batch"));
        }
        let y = self.td_targets(actor, &rewards, batch, rng)?;
        let sa = batch.state_actions();
        let loss = Self::regress(&mut self.q1, &mut self.opt1, &sa, &y)?;
        if self.twin {
            Self::regress(&mut self.q2, &mut self.opt2, &sa, &y)?;
        }
        if !loss.is_finite() {
            return Err(Error::numerical("critic loss diverged"));
        }
        Ok(loss)
    }

    pub fn soft_update_targets(&mut self, tau: f64) {
        self.q1_target.soft_update_from(&self.q1, tau);
        self.q2_target.soft_update_from(&self.q2, tau);
    }
}

/// Result of one [`Agent::train_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub critic_loss: f64,
    pub actor_updated: bool,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: Actor,
    pub critic: Critic,
    policy_delay: usize,
    critic_updates: u64,
    actor_updates: u64,
}

impl Agent {
    pub fn new(spec: &EnvSpec, cfg: &AgentConfig, rng: &mut SimRng) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        Ok(Agent {
            actor: Actor::new(spec, cfg, rng)?,
            critic: Critic::new(spec, cfg, rng)?,
            policy_delay: cfg.policy_delay,
            critic_updates: 0,
            actor_updates: 0,
        })
    }

    pub fn critic_updates(&self) -> u64 {
        self.critic_updates
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_updates
    }

    /// Critic step on `batch`; every `policy_delay`-th call also updates the
    /// actor on the batch states and soft-updates all target networks.
    pub fn train_step(&mut self, batch: &Batch, reward: &dyn RewardModel, rng: &mut SimRng) -> Result<StepStats> {
        let critic_loss = self.critic.update(&self.actor, reward, batch, rng)?;
        self.critic_updates += 1;
        let actor_updated = self.critic_updates.is_multiple_of(self.policy_delay as u64);
        if actor_updated {
            self.actor.update(&self.critic, &batch.states)?;
            let tau = self.critic.tau;
            self.actor.soft_update_target(tau);
            self.critic.soft_update_targets(tau);
            self.actor_updates += 1;
        }
        Ok(StepStats {
            critic_loss,
            actor_updated,
        })
    }

    /// Stores actor, critics and all targets.
    pub fn save(&self, path: &Path) -> Result<()> {
        let c = &self.critic;
        checkpoint::save_networks(
            path,
            &[&self.actor.net, &self.actor.target, &c.q1, &c.q2, &c.q1_target, &c.q2_target],
        )
    }

    /// Replaces the networks with those stored at `path`. Optimizer state
    /// is not part of a checkpoint.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        let nets = checkpoint::load_networks(path)?;
        let [actor, actor_t, q1, q2, q1_t, q2_t]: [Mlp; 6] = nets
            .try_into()
            .map_err(|_| Error::parse(path.display().to_string(), "expected six networks"))?;
        let c = &self.critic;
        let shapes_ok = actor.same_shape(&self.actor.net)
            && actor_t.same_shape(&self.actor.target)
            && q1.same_shape(&c.q1)
            && q2.same_shape(&c.q2)
            && q1_t.same_shape(&c.q1_target)
            && q2_t.same_shape(&c.q2_target);
        if !shapes_ok {
            return Err(Error::config("checkpoint networks do not match the agent's shape"));
        }
        self.actor.net = actor;
        self.actor.target = actor_t;
        self.critic.q1 = q1;
        self.critic.q2 = q2;
        self.critic.q1_target = q1_t;
        self.critic.q2_target = q2_t;
        Ok(())
    }
}
