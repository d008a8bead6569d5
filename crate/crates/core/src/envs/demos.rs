//! Rollouts, demonstration generation and the JSON-lines demonstration file.
//!
//! One trajectory per line:
//!
//! ```text
//! {"episodic_return": -3.2, "quality": 0.5, "steps": [[[s..], [a..], [s'..], i], ...]}
//! ```
//!
//! `i` is 1 only on a final step that entered an absorbing state. The
//! episodic reward is attached to the final step on load. `quality` is
//! `null` for trajectories that did not come from a scripted teacher.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sparsify_trajectory, Env, EnvSpec, RawStep, ScriptedTeacher, SimRng, Trajectory, Transition};
use crate::error::{Error, Result};

/// Episodes used for the random-policy baseline of the teacher screen.
pub const RANDOM_BASELINE_EPISODES: usize = 20;

/// Runs one complete episode with `policy` and returns the sparsified trajectory.
pub fn rollout<P>(env: &mut dyn Env, policy: P, rng: &mut SimRng) -> Result<Trajectory>
where
    P: FnMut(&[f64], &mut SimRng) -> Vec<f64>,
{
    sparsify_trajectory(rollout_raw(env, policy, rng)?)
}

/// Runs one complete episode and keeps the per-step rewards.
pub fn rollout_raw<P>(env: &mut dyn Env, mut policy: P, rng: &mut SimRng) -> Result<Vec<RawStep>>
where
    P: FnMut(&[f64], &mut SimRng) -> Vec<f64>,
{
    let mut state = env.reset(rng);
    let mut steps = Vec::new();
    loop {
        let action = env.spec().clip_action(&policy(&state, rng));
        let res = env.step(&action, rng)?;
        let done = res.terminal || res.timeout;
        steps.push(RawStep {
            s: std::mem::replace(&mut state, res.next_state.clone()),
            a: action,
            s_next: res.next_state,
            dense_reward: res.dense_reward,
            terminal: res.terminal,
            timeout: res.timeout,
        });
        if done {
            return Ok(steps);
        }
    }
}

pub fn uniform_action(spec: &EnvSpec, rng: &mut SimRng) -> Vec<f64> {
    spec.action_low
        .iter()
        .zip(&spec.action_high)
        .map(|(lo, hi)| rng.random_range(*lo..*hi))
        .collect()
}

/// Episodic returns of the uniform-random policy.
pub fn random_policy_returns(env: &mut dyn Env, episodes: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
    let spec = env.spec().clone();
    (0..episodes)
        .map(|_| rollout(env, |_, r| uniform_action(&spec, r), rng).map(|t| t.episodic_return))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Demonstrations {
    pub trajectories: Vec<Trajectory>,
    pub quality: f64,
    pub random_baseline: Vec<f64>,
    /// Teacher mean return strictly exceeds the random-policy mean.
    pub assumption_holds: bool,
}

impl Demonstrations {
    pub fn mean_return(&self) -> f64 {
        mean(self.trajectories.iter().map(|t| t.episodic_return))
    }

    pub fn random_mean(&self) -> f64 {
        mean(self.random_baseline.iter().copied())
    }
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Rolls out `teacher` for `n_traj` episodes and screens the result against
/// a uniform-random baseline.
pub fn generate_demonstrations(
    env: &mut dyn Env,
    teacher: &ScriptedTeacher,
    n_traj: usize,
    rng: &mut SimRng,
) -> Result<Demonstrations> {
    if n_traj == 0 {
        return Err(Error::usage("at least one demonstration trajectory is required"));
    }
    let trajectories = (0..n_traj)
        .map(|_| rollout(env, |s, r| teacher.act(s, r), rng))
        .collect::<Result<Vec<_>>>()?;
    let random_baseline = random_policy_returns(env, RANDOM_BASELINE_EPISODES, rng)?;
    let mut demos = Demonstrations {
        trajectories,
        quality: teacher.quality(),
        random_baseline,
        assumption_holds: false,
    };
    demos.assumption_holds = demos.mean_return() > demos.random_mean();
    if !demos.assumption_holds {
        warn!(
            "teacher (q = {}) does not beat the random policy: mean {:.3} vs {:.3}",
            demos.quality,
            demos.mean_return(),
            demos.random_mean()
        );
    }
    Ok(demos)
}

/// `(s, a, s_next, terminal)` as stored on disk.
pub type StepRecord = (Vec<f64>, Vec<f64>, Vec<f64>, u8);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub episodic_return: f64,
    pub quality: Option<f64>,
    pub steps: Vec<StepRecord>,
}

impl DemoRecord {
    pub fn from_trajectory(traj: &Trajectory, quality: Option<f64>) -> Self {
        DemoRecord {
            episodic_return: traj.episodic_return,
            quality,
            steps: traj
                .transitions
                .iter()
                .map(|t| (t.s.clone(), t.a.clone(), t.s_next.clone(), u8::from(t.terminal)))
                .collect(),
        }
    }

    pub fn into_trajectory(self, spec: Option<&EnvSpec>) -> Result<Trajectory> {
        let loc = "demonstration record";
        if !self.episodic_return.is_finite() {
            return Err(Error::parse(loc, "episodic_return must be finite"));
        }
        if self.steps.is_empty() {
            return Err(Error::parse(loc, "trajectory has no steps"));
        }
        let n = self.steps.len();
        let (sd, ad) = (self.steps[0].0.len(), self.steps[0].1.len());
        let mut transitions = Vec::with_capacity(n);
        for (i, (s, a, s_next, flag)) in self.steps.into_iter().enumerate() {
            if s.len() != sd || s_next.len() != sd || a.len() != ad {
                return Err(Error::parse(loc, format!("step {i} has inconsistent dimensions")));
            }
            if flag > 1 {
                return Err(Error::parse(loc, format!("step {i} has indicator {flag}, expected 0 or 1")));
            }
            if flag == 1 && i + 1 != n {
                return Err(Error::parse(loc, format!("step {i} is terminal but not last")));
            }
            if s.iter().chain(&a).chain(&s_next).any(|v| !v.is_finite()) {
                return Err(Error::parse(loc, format!("step {i} has non-finite values")));
            }
            if let Some(spec) = spec {
                if sd != spec.state_dim || ad != spec.action_dim {
                    return Err(Error::parse(loc, "dimensions do not match the environment"));
                }
                if !spec.action_in_bounds(&a) {
                    return Err(Error::parse(loc, format!("step {i} action out of bounds")));
                }
                if !spec.state_in_bounds(&s) || !spec.state_in_bounds(&s_next) {
                    return Err(Error::parse(loc, format!("step {i} state out of bounds")));
                }
            }
            transitions.push(Transition {
                s,
                a,
                s_next,
                terminal: flag == 1,
                r_e: if i + 1 == n { self.episodic_return } else { 0.0 },
            });
        }
        Ok(Trajectory {
            transitions,
            episodic_return: self.episodic_return,
        })
    }
}

/// Writes trajectories as JSON lines. The file is written next to `path`
/// and renamed into place so readers never see a half-written file.
pub fn write_demonstrations(path: &Path, trajectories: &[Trajectory], quality: Option<f64>) -> Result<()> {
    let tmp = path.with_extension("jsonl.partial");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        for traj in trajectories {
            let rec = DemoRecord::from_trajectory(traj, quality);
            serde_json::to_writer(&mut w, &rec).map_err(|e| Error::io(&tmp, e.into()))?;
            w.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
        }
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads and validates a demonstration file.
pub fn read_demonstrations(path: &Path, spec: Option<&EnvSpec>) -> Result<Vec<Trajectory>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let loc = format!("{}:{}", path.display(), lineno + 1);
        let rec: DemoRecord = serde_json::from_str(&line).map_err(|e| Error::parse(&loc, e.to_string()))?;
        let traj = rec.into_trajectory(spec).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(&loc, message),
            other => other,
        })?;
        out.push(traj);
    }
    if out.is_empty() {
        return Err(Error::parse(path.display().to_string(), "no trajectories in file"));
    }
    Ok(out)
}
