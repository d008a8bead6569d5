//! A planar double integrator that has to reach a goal disc.
//!
//! State is `(x, y, vx, vy)` in `[-1, 1]^4`, the action is an acceleration in
//! `[-1, 1]^2`. Each step applies
//!
//! ```text
//! v' = clip(v + accel_gain * a, -1, 1)
//! p' = clip(p + dt * v', -1, 1)
//! ```
//!
//! Walls are inelastic: a coordinate that gets clipped also loses its
//! velocity component, so the mass never sits pinned against a wall with
//! residual speed.
//!
//! and pays `-‖p' - goal‖`, plus `goal_bonus` on the step that lands inside
//! the goal disc, which is absorbing. Dynamics are deterministic; the only
//! randomness is the start position, drawn uniformly from a disc of radius
//! `start_radius` around `start`.

use rand::Rng;

use super::{Env, EnvSpec, SimRng, StepResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PointMassParams {
    pub start: [f64; 2],
    pub start_radius: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub goal_bonus: f64,
    pub accel_gain: f64,
    pub dt: f64,
    pub max_steps: usize,
}

impl Default for PointMassParams {
    fn default() -> Self {
        PointMassParams {
            start: [-0.5, -0.5],
            start_radius: 0.05,
            goal: [0.5, 0.5],
            goal_radius: 0.1,
            goal_bonus: 25.0,
            accel_gain: 0.25,
            dt: 0.1,
            max_steps: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointMass2D {
    params: PointMassParams,
    spec: EnvSpec,
    state: [f64; 4],
    steps: usize,
    done: bool,
}

impl PointMass2D {
    pub fn new(params: PointMassParams) -> Self {
        let spec = EnvSpec {
            id: "point-mass".into(),
            state_dim: 4,
            action_dim: 2,
            action_low: vec![-1.0; 2],
            action_high: vec![1.0; 2],
            state_low: vec![-1.0; 4],
            state_high: vec![1.0; 4],
            max_steps: params.max_steps,
        };
        let state = [params.start[0], params.start[1], 0.0, 0.0];
        PointMass2D {
            params,
            spec,
            state,
            steps: 0,
            done: false,
        }
    }

    pub fn params(&self) -> &PointMassParams {
        &self.params
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// Places the mass at an arbitrary state and re-arms the episode.
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.steps = 0;
        self.done = false;
    }

    pub fn distance_to_goal(&self, pos: [f64; 2]) -> f64 {
        let dx = pos[0] - self.params.goal[0];
        let dy = pos[1] - self.params.goal[1];
        (dx * dx + dy * dy).sqrt()
    }
}

impl Env for PointMass2D {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        let [sx, sy] = self.params.start;
        let (x, y) = if self.params.start_radius > 0.0 {
            let r = self.params.start_radius * rng.random::<f64>().sqrt();
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            (sx + r * theta.cos(), sy + r * theta.sin())
        } else {
            (sx, sy)
        };
        self.state = [x.clamp(-1.0, 1.0), y.clamp(-1.0, 1.0), 0.0, 0.0];
        self.steps = 0;
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: &[f64], _rng: &mut SimRng) -> Result<StepResult> {
        if self.done {
            return Err(Error::usage("step called after the episode ended; call reset first"));
        }
        if action.len() != 2 {
            return Err(Error::config(format!("point mass expects 2 action dims, got {}", action.len())));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::numerical("non-finite action"));
        }
        let a = self.spec.clip_action(action);
        let p = &self.params;
        let [x, y, vx, vy] = self.state;
        let axis = |pos: f64, vel: f64, acc: f64| {
            let v = (vel + p.accel_gain * acc).clamp(-1.0, 1.0);
            let moved = pos + p.dt * v;
            if moved.abs() > 1.0 {
                (moved.clamp(-1.0, 1.0), 0.0)
            } else {
                (moved, v)
            }
        };
        let (x, vx) = axis(x, vx, a[0]);
        let (y, vy) = axis(y, vy, a[1]);
        self.state = [x, y, vx, vy];
        self.steps += 1;

        let dist = self.distance_to_goal([x, y]);
        let terminal = dist < p.goal_radius;
        let dense_reward = -dist + if terminal { p.goal_bonus } else { 0.0 };
        let timeout = !terminal && self.steps >= p.max_steps;
        self.done = terminal || timeout;
        Ok(StepResult {
            next_state: self.state.to_vec(),
            dense_reward,
            terminal,
            timeout,
        })
    }
}
