//! An eight-state slippery chain with a one-hot state encoding.
//!
//! Action 0 moves left, action 1 moves right; with probability `slip` the
//! agent stays where it is. The rightmost state is absorbing and pays
//! `goal_reward` on entry. Continuous actions are mapped to the discrete
//! ones by sign (`a > 0` is right).

use rand::Rng;

use super::{Env, EnvSpec, SimRng, StepResult};
use crate::error::{Error, Result};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainParams {
    pub n_states: usize,
    pub slip: f64,
    pub goal_reward: f64,
    pub max_steps: usize,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            n_states: 8,
            slip: 0.1,
            goal_reward: 1.0,
            max_steps: 50,
        }
    }
}

impl ChainParams {
    pub fn goal(&self) -> usize {
        self.n_states - 1
    }

    /// `P(· | s, a)` as a dense vector over next states.
    pub fn kernel(&self, s: usize, a: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.n_states];
        if s == self.goal() {
            p[s] = 1.0;
            return p;
        }
        let moved = match a {
            RIGHT => (s + 1).min(self.n_states - 1),
            _ => s.saturating_sub(1),
        };
        p[moved] += 1.0 - self.slip;
        p[s] += self.slip;
        p
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        v[s] = 1.0;
        v
    }

    /// Maps a continuous action to the discrete move it selects.
    pub fn discretize(action: &[f64]) -> usize {
        if action[0] > 0.0 {
            RIGHT
        } else {
            LEFT
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainMdp {
    params: ChainParams,
    spec: EnvSpec,
    state: usize,
    steps: usize,
    done: bool,
}

impl ChainMdp {
    pub fn new(params: ChainParams) -> Self {
        let spec = EnvSpec {
            id: "chain".into(),
            state_dim: params.n_states,
            action_dim: 1,
            action_low: vec![-1.0],
            action_high: vec![1.0],
            state_low: vec![0.0; params.n_states],
            state_high: vec![1.0; params.n_states],
            max_steps: params.max_steps,
        };
        ChainMdp {
            params,
            spec,
            state: 0,
            steps: 0,
            done: false,
        }
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn state_index(&self) -> usize {
        self.state
    }

    /// Discrete step: returns the next state index, reward and terminal flag.
    pub fn step_discrete(&mut self, a: usize, rng: &mut SimRng) -> Result<(usize, f64, bool)> {
        if self.done {
            return Err(Error::usage("step called after the episode ended; call reset first"));
        }
        if a > RIGHT {
            return Err(Error::config(format!("chain has 2 actions, got index {a}")));
        }
        let probs = self.params.kernel(self.state, a);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = self.params.n_states - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                next = i;
                break;
            }
        }
        self.state = next;
        self.steps += 1;
        let terminal = next == self.params.goal();
        let reward = if terminal { self.params.goal_reward } else { 0.0 };
        self.done = terminal || self.steps >= self.params.max_steps;
        Ok((next, reward, terminal))
    }
}

impl Env for ChainMdp {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut SimRng) -> Vec<f64> {
        self.state = 0;
        self.steps = 0;
        self.done = false;
        self.params.one_hot(0)
    }

    fn step(&mut self, action: &[f64], rng: &mut SimRng) -> Result<StepResult> {
        if action.len() != 1 || !action[0].is_finite() {
            return Err(Error::config("chain expects one finite action value"));
        }
        let a = ChainParams::discretize(&self.spec.clip_action(action));
        let (next, dense_reward, terminal) = self.step_discrete(a, rng)?;
        Ok(StepResult {
            next_state: self.params.one_hot(next),
            dense_reward,
            terminal,
            timeout: !terminal && self.done,
        })
    }
}
