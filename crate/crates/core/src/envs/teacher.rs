//! Scripted sub-optimal teachers.
//!
//! The point-mass teacher is a PD controller toward the goal whose gains are
//! detuned as the quality knob `q` drops, plus Gaussian action noise with
//! standard deviation `noise_scale * (1 - q)`. At `q = 1` it saturates into
//! full acceleration toward the goal and matches the time-optimal policy from
//! the default start.

use rand::Rng;
use rand_distr::StandardNormal;

use super::point_mass::PointMassParams;
use super::SimRng;
use crate::error::{Error, Result};

const PD_KP_MAX: f64 = 40.0;
const PD_NOISE_SCALE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptedTeacher {
    PointMass {
        quality: f64,
        goal: [f64; 2],
        kp: f64,
        kd: f64,
        noise_std: f64,
    },
    /// Moves right with probability `0.5 + 0.5 q`, left otherwise.
    Chain { quality: f64 },
}

fn check_quality(q: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::config(format!("teacher quality must lie in (0, 1], got {q}")));
    }
    Ok(())
}

impl ScriptedTeacher {
    pub fn point_mass(params: &PointMassParams, quality: f64) -> Result<Self> {
        check_quality(quality)?;
        let kp = PD_KP_MAX * quality.powi(4);
        let kd = (2.7 - 2.2 * quality) * kp.sqrt();
        Ok(ScriptedTeacher::PointMass {
            quality,
            goal: params.goal,
            kp,
            kd,
            noise_std: PD_NOISE_SCALE * (1.0 - quality),
        })
    }

    pub fn chain(quality: f64) -> Result<Self> {
        check_quality(quality)?;
        Ok(ScriptedTeacher::Chain { quality })
    }

    pub fn quality(&self) -> f64 {
        match self {
            ScriptedTeacher::PointMass { quality, .. } | ScriptedTeacher::Chain { quality } => *quality,
        }
    }

    /// Same controller with the exploration noise removed.
    pub fn noiseless(&self) -> Self {
        let mut t = self.clone();
        if let ScriptedTeacher::PointMass { noise_std, .. } = &mut t {
            *noise_std = 0.0;
        }
        t
    }

    pub fn act(&self, state: &[f64], rng: &mut SimRng) -> Vec<f64> {
        match self {
            ScriptedTeacher::PointMass {
                goal, kp, kd, noise_std, ..
            } => (0..2)
                .map(|i| {
                    let mut a = kp * (goal[i] - state[i]) - kd * state[i + 2];
                    if *noise_std > 0.0 {
                        let n: f64 = rng.sample(StandardNormal);
                        a += noise_std * n;
                    }
                    a.clamp(-1.0, 1.0)
                })
                .collect(),
            ScriptedTeacher::Chain { quality } => {
                let right = rng.random::<f64>() < 0.5 + 0.5 * quality;
                vec![if right { 1.0 } else { -1.0 }]
            }
        }
    }
}
