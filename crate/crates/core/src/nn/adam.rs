//! Bias-corrected Adam.

use super::mlp::{Grads, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Adam::with_betas(param_count, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(param_count: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn for_mlp(mlp: &Mlp, lr: f64) -> Self {
        Adam::new(mlp.param_count(), lr)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Applies one descent step to `params` given `grads` of the loss.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::config(format!(
                "optimizer sized for {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite gradient at parameter {i} (optimizer step {})",
                self.step + 1
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let step_size = self.lr / c1;
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= step_size * *m / ((*v / c2).sqrt() + self.eps);
        }
        Ok(())
    }

    pub fn step_mlp(&mut self, mlp: &mut Mlp, grads: &Grads) -> Result<()> {
        self.step(mlp.params_mut(), grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut opt = Adam::new(2, 1e-3);
        let mut p = vec![1.0, -2.0];
        opt.step(&mut p, &[0.5, 0.5]).unwrap();
        let m_before = opt.first_moment().to_vec();
        let p_before = p.clone();
        opt.step(&mut p, &[0.0, 0.0]).unwrap();
        // m decays, and the update m̂/sqrt(v̂) is no longer zero, so params only
        // stay fixed when both moments start at zero.
        assert!(opt.first_moment().iter().zip(&m_before).all(|(a, b)| a.abs() < b.abs()));
        let mut fresh = Adam::new(2, 1e-3);
        let mut q = p_before.clone();
        fresh.step(&mut q, &[0.0, 0.0]).unwrap();
        assert_eq!(q, p_before);
        assert_eq!(fresh.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = Adam::new(1, 1e-3);
        let mut p = vec![0.0];
        opt.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] + 1e-3).abs() < 1e-9, "{}", p[0]);
    }

    #[test]
    fn descends_a_parabola() {
        let mut opt = Adam::new(1, 0.01);
        let mut x = vec![1.0];
        let mut prev = f64::INFINITY;
        for step in 0..100 {
            let g = 2.0 * x[0];
            opt.step(&mut x, &[g]).unwrap();
            if step >= 5 {
                assert!(x[0].abs() < prev, "step {step}: |x| = {}", x[0].abs());
            }
            prev = x[0].abs();
        }
        assert!(x[0].abs() < 0.5);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut opt = Adam::new(1, 1e-3);
        let mut p = vec![0.0];
        assert!(matches!(opt.step(&mut p, &[f64::NAN]), Err(Error::Numerical(_))));
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let mut opt = Adam::new(2, 1e-3);
        let mut p = vec![0.0];
        assert!(matches!(opt.step(&mut p, &[1.0]), Err(Error::Config(_))));
    }
}
