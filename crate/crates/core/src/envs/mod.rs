//! Environments with hidden dense rewards that are only revealed as a single
//! episodic reward once a trajectory ends.

mod chain;
mod demos;
mod point_mass;
mod teacher;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use chain::{ChainMdp, ChainParams};
pub use demos::{
    generate_demonstrations, random_policy_returns, read_demonstrations, rollout, rollout_raw, uniform_action,
    write_demonstrations, DemoRecord, Demonstrations, RANDOM_BASELINE_EPISODES,
};
pub use point_mass::{PointMass2D, PointMassParams};
pub use teacher::ScriptedTeacher;

use crate::error::{Error, Result};

/// RNG used for every stochastic component so runs replay exactly per seed.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub id: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub state_low: Vec<f64>,
    pub state_high: Vec<f64>,
    pub max_steps: usize,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.action_low.len() != self.action_dim || self.action_high.len() != self.action_dim {
            return Err(Error::config("action bounds do not match action_dim"));
        }
        if self.state_low.len() != self.state_dim || self.state_high.len() != self.state_dim {
            return Err(Error::config("state bounds do not match state_dim"));
        }
        let ordered = |lo: &[f64], hi: &[f64]| {
            lo.iter()
                .zip(hi)
                .all(|(l, h)| l.is_finite() && h.is_finite() && l < h)
        };
        if !ordered(&self.action_low, &self.action_high) || !ordered(&self.state_low, &self.state_high) {
            return Err(Error::config("bounds must be finite with low < high"));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps must be at least 1"));
        }
        Ok(())
    }

    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(a, (lo, hi))| a.clamp(*lo, *hi))
            .collect()
    }

    pub fn action_in_bounds(&self, action: &[f64]) -> bool {
        action.len() == self.action_dim
            && action
                .iter()
                .zip(self.action_low.iter().zip(&self.action_high))
                .all(|(a, (lo, hi))| a >= lo && a <= hi)
    }

    pub fn state_in_bounds(&self, state: &[f64]) -> bool {
        state.len() == self.state_dim
            && state
                .iter()
                .zip(self.state_low.iter().zip(&self.state_high))
                .all(|(s, (lo, hi))| s >= lo && s <= hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    /// Per-step reward; never shown to learners, only summed into the episodic reward.
    pub dense_reward: f64,
    /// The next state is absorbing (goal reached).
    pub terminal: bool,
    /// The horizon was hit without reaching an absorbing state.
    pub timeout: bool,
}

/// One stored environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s_next: Vec<f64>,
    /// `s_next` is absorbing; the critic does not bootstrap past it.
    pub terminal: bool,
    /// Episodic reward, nonzero only on the last step of a trajectory.
    pub r_e: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub episodic_return: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Ended in an absorbing state rather than at the horizon.
    pub fn reached_terminal(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.terminal)
    }

    /// Checks the episodic masking invariant: only the final transition may
    /// carry a nonzero `r_e`, it equals `episodic_return`, and only the final
    /// transition may be terminal.
    pub fn validate(&self) -> Result<()> {
        let n = self.transitions.len();
        if n == 0 {
            return Err(Error::usage("empty trajectory"));
        }
        for (i, t) in self.transitions.iter().enumerate() {
            let last = i + 1 == n;
            if !last && (t.r_e != 0.0 || t.terminal) {
                return Err(Error::usage(format!(
                    "transition {i} of {n} carries an episodic reward or terminal flag"
                )));
            }
        }
        let last = &self.transitions[n - 1];
        if last.r_e != self.episodic_return {
            return Err(Error::usage("final r_e disagrees with episodic_return"));
        }
        Ok(())
    }
}

/// One raw step as the environment produced it, before sparsification.
#[derive(Debug, Clone, PartialEq)]
pub struct RawStep {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s_next: Vec<f64>,
    pub dense_reward: f64,
    pub terminal: bool,
    pub timeout: bool,
}

/// Replaces per-step rewards by one episodic reward on the final transition.
pub fn sparsify_trajectory(steps: Vec<RawStep>) -> Result<Trajectory> {
    let Some(last) = steps.last() else {
        return Err(Error::usage("cannot sparsify an empty trajectory"));
    };
    if !(last.terminal || last.timeout) {
        return Err(Error::usage(
            "trajectory is incomplete: last step is neither terminal nor a timeout",
        ));
    }
    let episodic_return: f64 = steps.iter().map(|s| s.dense_reward).sum();
    let n = steps.len();
    let transitions = steps
        .into_iter()
        .enumerate()
        .map(|(i, st)| Transition {
            s: st.s,
            a: st.a,
            s_next: st.s_next,
            terminal: st.terminal,
            r_e: if i + 1 == n { episodic_return } else { 0.0 },
        })
        .collect();
    Ok(Trajectory {
        transitions,
        episodic_return,
    })
}

pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;

    /// Samples a start state and zeroes the step counter.
    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64>;

    /// Advances one step; the action is clipped to the declared bounds first.
    fn step(&mut self, action: &[f64], rng: &mut SimRng) -> Result<StepResult>;
}

/// Named environments the trainer and CLI can construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvId {
    #[serde(rename = "point-mass")]
    PointMass,
    #[serde(rename = "chain")]
    Chain,
}

impl EnvId {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::PointMass => "point-mass",
            EnvId::Chain => "chain",
        }
    }

    pub fn make(self) -> Box<dyn Env> {
        match self {
            EnvId::PointMass => Box::new(PointMass2D::new(PointMassParams::default())),
            EnvId::Chain => Box::new(ChainMdp::new(ChainParams::default())),
        }
    }
}

impl std::str::FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point-mass" | "pointmass" | "PointMass2D" => Ok(EnvId::PointMass),
            "chain" | "ChainMDP" => Ok(EnvId::Chain),
            other => Err(Error::config(format!("unknown environment '{other}'"))),
        }
    }
}

impl std::fmt::Display for EnvId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
