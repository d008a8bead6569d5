//! Discriminator between teacher and self-generated state-action pairs.
//!
//! Trained as a binary classifier (teacher = 1) with a gradient penalty on
//! random interpolates between the two batches. At optimum its output is
//! `d_T / (d_T + d_B)`, and `-ln(1 - D)` serves as the agent's reward.

use rand::Rng;

use crate::agent::RewardModel;
use crate::buffers::Batch;
use crate::envs::{EnvSpec, SimRng};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Matrix, Mlp};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gp_coeff: f64,
    /// Output clamp: D is kept inside `[eps, 1 - eps]` before taking logs.
    pub clamp_eps: f64,
    /// Multiplies the bound-normalised inputs. The gradient penalty pulls the
    /// slope of D towards 1 in these units, so a larger gain lets D fall off
    /// faster away from the teacher data.
    pub input_gain: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            hidden: vec![64, 64],
            lr: 3e-4,
            gp_coeff: 10.0,
            clamp_eps: 1e-6,
            input_gain: 1.0,
        }
    }
}

/// Affine map of raw inputs onto roughly `[-1, 1]` per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaling {
    center: Vec<f64>,
    half_range: Vec<f64>,
}

impl InputScaling {
    pub fn identity(dim: usize) -> Self {
        InputScaling {
            center: vec![0.0; dim],
            half_range: vec![1.0; dim],
        }
    }

    /// Scales `[s | a]` by the environment's declared bounds.
    pub fn from_env(spec: &EnvSpec) -> Self {
        let lows = spec.state_low.iter().chain(&spec.action_low);
        let highs = spec.state_high.iter().chain(&spec.action_high);
        let (center, half_range) = lows.zip(highs).map(|(l, h)| ((l + h) / 2.0, (h - l) / 2.0)).unzip();
        InputScaling { center, half_range }
    }

    /// Stretches the normalised coordinates by `gain`.
    pub fn with_gain(mut self, gain: f64) -> Self {
        for h in &mut self.half_range {
            *h /= gain;
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn apply(&self, raw: &Matrix) -> Matrix {
        let mut out = raw.clone();
        for r in 0..out.rows() {
            for ((v, c), h) in out.row_mut(r).iter_mut().zip(&self.center).zip(&self.half_range) {
                *v = (*v - c) / h;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    net: Mlp,
    opt: Adam,
    scaling: InputScaling,
    gp_coeff: f64,
    clamp_eps: f64,
}

/// Components of one discriminator loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscLoss {
    pub classification: f64,
    pub penalty: f64,
    pub total: f64,
}

impl Discriminator {
    pub fn new(scaling: InputScaling, cfg: &DiscriminatorConfig, rng: &mut SimRng) -> Result<Self> {
        if cfg.gp_coeff < 0.0 {
            return Err(Error::config("gradient penalty coefficient must be non-negative"));
        }
        if !(cfg.clamp_eps > 0.0 && cfg.clamp_eps < 0.5) {
            return Err(Error::config("discriminator clamp must lie in (0, 0.5)"));
        }
        if !(cfg.input_gain > 0.0 && cfg.input_gain.is_finite()) {
            return Err(Error::config("discriminator input gain must be positive and finite"));
        }
        let mut dims = vec![scaling.dim()];
        dims.extend(&cfg.hidden);
        dims.push(1);
        let mut acts = vec![Activation::Relu; cfg.hidden.len()];
        acts.push(Activation::Sigmoid);
        let net = Mlp::new(&dims, &acts, rng)?;
        let opt = Adam::for_mlp(&net, cfg.lr);
        Ok(Discriminator {
            net,
            opt,
            scaling,
            gp_coeff: cfg.gp_coeff,
            clamp_eps: cfg.clamp_eps,
        })
    }

    pub fn for_env(spec: &EnvSpec, cfg: &DiscriminatorConfig, rng: &mut SimRng) -> Result<Self> {
        Discriminator::new(InputScaling::from_env(spec).with_gain(cfg.input_gain), cfg, rng)
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn clamp_eps(&self) -> f64 {
        self.clamp_eps
    }

    fn check_width(&self, raw: &Matrix) -> Result<()> {
        if raw.cols() != self.scaling.dim() {
            return Err(Error::config(format!(
                "discriminator expects {} input columns, got {}",
                self.scaling.dim(),
                raw.cols()
            )));
        }
        Ok(())
    }

    /// Clamped D for each row of raw `[s | a]` inputs.
    pub fn probabilities(&self, raw: &Matrix) -> Result<Vec<f64>> {
        self.check_width(raw)?;
        let out = self.net.predict(&self.scaling.apply(raw))?;
        let eps = self.clamp_eps;
        Ok(out.data().iter().map(|d| d.clamp(eps, 1.0 - eps)).collect())
    }

    pub fn probability(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        let row: Vec<f64> = s.iter().chain(a).copied().collect();
        Ok(self.probabilities(&Matrix::row_vector(&row))?[0])
    }

    /// `-ln(1 - D)` for each row of raw `[s | a]` inputs.
    pub fn shaped_rewards(&self, raw: &Matrix) -> Result<Vec<f64>> {
        Ok(self
            .probabilities(raw)?
            .into_iter()
            .map(shaped_reward_from_probability)
            .collect())
    }

    pub fn shaped_reward(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        self.probability(s, a).map(shaped_reward_from_probability)
    }

    fn interpolates(teacher: &Matrix, other: &Matrix, rng: &mut SimRng) -> Matrix {
        let mut mixed = teacher.clone();
        for r in 0..mixed.rows() {
            let u: f64 = rng.random();
            for (m, o) in mixed.row_mut(r).iter_mut().zip(other.row(r)) {
                *m = u * *m + (1.0 - u) * o;
            }
        }
        mixed
    }

    /// Loss and parameter gradient on scaled inputs.
    fn loss_and_grads(&self, teacher: &Matrix, other: &Matrix, mixed: &Matrix) -> Result<(DiscLoss, Vec<f64>)> {
        const LOG_FLOOR: f64 = 1e-12;
        let (nt, nb) = (teacher.rows() as f64, other.rows() as f64);

        let (dt, cache_t) = self.net.forward(teacher)?;
        let mut up_t = Matrix::zeros(dt.rows(), 1);
        let mut classification = 0.0;
        for (u, &d) in up_t.data_mut().iter_mut().zip(dt.data()) {
            let d = d.max(LOG_FLOOR);
            classification -= d.ln() / nt;
            *u = -1.0 / (d * nt);
        }
        let (g_t, _) = self.net.backward(&cache_t, &up_t)?;

        let (db, cache_b) = self.net.forward(other)?;
        let mut up_b = Matrix::zeros(db.rows(), 1);
        for (u, &d) in up_b.data_mut().iter_mut().zip(db.data()) {
            let q = (1.0 - d).max(LOG_FLOOR);
            classification -= q.ln() / nb;
            *u = 1.0 / (q * nb);
        }
        let (g_b, _) = self.net.backward(&cache_b, &up_b)?;

        let mut grads: Vec<f64> = g_t.iter().zip(g_b.iter()).map(|(a, b)| a + b).collect();
        let mut penalty = 0.0;
        if self.gp_coeff > 0.0 {
            let (p, g_p) = self.net.input_grad_penalty(mixed, 1.0)?;
            penalty = p;
            for (g, gp) in grads.iter_mut().zip(g_p.iter()) {
                *g += self.gp_coeff * gp;
            }
        }
        let loss = DiscLoss {
            classification,
            penalty,
            total: classification + self.gp_coeff * penalty,
        };
        Ok((loss, grads))
    }

    /// Evaluates the loss without updating, on raw `[s | a]` batches.
    pub fn loss(&self, teacher_sa: &Matrix, other_sa: &Matrix, rng: &mut SimRng) -> Result<DiscLoss> {
        let (t, o) = self.prepare(teacher_sa, other_sa)?;
        let mixed = Self::interpolates(&t, &o, rng);
        Ok(self.loss_and_grads(&t, &o, &mixed)?.0)
    }

    fn prepare(&self, teacher_sa: &Matrix, other_sa: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check_width(teacher_sa)?;
        self.check_width(other_sa)?;
        if teacher_sa.rows() != other_sa.rows() || teacher_sa.rows() == 0 {
            return Err(Error::config("discriminator batches must be non-empty and of equal size"));
        }
        Ok((self.scaling.apply(teacher_sa), self.scaling.apply(other_sa)))
    }

    /// One gradient step separating `teacher_sa` (label 1) from `other_sa`
    /// (label 0) with the interpolate gradient penalty. Returns the loss
    /// re-evaluated after the step on the same samples.
    pub fn update(&mut self, teacher_sa: &Matrix, other_sa: &Matrix, rng: &mut SimRng) -> Result<DiscLoss> {
        let (t, o) = self.prepare(teacher_sa, other_sa)?;
        let mixed = Self::interpolates(&t, &o, rng);
        let (_, grads) = self.loss_and_grads(&t, &o, &mixed)?;
        self.opt.step(self.net.params_mut(), &grads)?;
        let (after, _) = self.loss_and_grads(&t, &o, &mixed)?;
        if !after.total.is_finite() {
            return Err(Error::numerical("discriminator loss diverged"));
        }
        Ok(after)
    }

    /// Replay-buffer variant: the negative class is drawn from the agent's
    /// replay buffer.
    pub fn disc_update(&mut self, teacher: &Batch, self_batch: &Batch, rng: &mut SimRng) -> Result<DiscLoss> {
        self.update(&teacher.state_actions(), &self_batch.state_actions(), rng)
    }

    /// On-policy variant: the negative class comes from fresh rollouts of the
    /// current policy. The arithmetic is identical to [`Self::disc_update`].
    pub fn onpolicy_disc_update(
        &mut self,
        teacher: &Batch,
        fresh_policy: &Batch,
        rng: &mut SimRng,
    ) -> Result<DiscLoss> {
        self.update(&teacher.state_actions(), &fresh_policy.state_actions(), rng)
    }
}

pub fn shaped_reward_from_probability(d: f64) -> f64 {
    -(1.0 - d).ln()
}

impl RewardModel for Discriminator {
    fn rewards(&self, batch: &Batch) -> Result<Vec<f64>> {
        self.shaped_rewards(&batch.state_actions())
    }
}
