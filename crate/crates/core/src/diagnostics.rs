//! Exact and sampled occupancy measures on tabular MDPs, KL divergence
//! between occupancy tables, and closed-form Gaussian density ratios.
//!
//! Occupancy here is the normalised discounted visitation
//! `d(s, a) = (1 - γ) Σ_t γ^t Pr(s_t = s, a_t = a)`. Terminal states are
//! absorbing: they loop onto themselves and keep accumulating mass.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::envs::{ChainParams, SimRng};
use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-9;
const OCCUPANCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `p[s][a][s']`.
    pub p: Vec<Vec<Vec<f64>>>,
    pub mu0: Vec<f64>,
    pub terminal: Vec<bool>,
    pub gamma: f64,
}

fn is_distribution(v: &[f64]) -> bool {
    v.iter().all(|&x| x >= 0.0 && x.is_finite()) && (v.iter().sum::<f64>() - 1.0).abs() < STOCHASTIC_TOL
}

impl TabularMdp {
    /// The slippery chain with its goal as an absorbing state.
    pub fn from_chain(params: &ChainParams, gamma: f64) -> Result<Self> {
        let n = params.n_states;
        let p = (0..n).map(|s| (0..2).map(|a| params.kernel(s, a)).collect()).collect();
        let mut mu0 = vec![0.0; n];
        mu0[0] = 1.0;
        let mut terminal = vec![false; n];
        terminal[params.goal()] = true;
        let mdp = TabularMdp {
            n_states: n,
            n_actions: 2,
            p,
            mu0,
            terminal,
            gamma,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::config("gamma must lie in [0, 1)"));
        }
        if self.p.len() != self.n_states || self.mu0.len() != self.n_states || self.terminal.len() != self.n_states {
            return Err(Error::config("tabular MDP arrays disagree with n_states"));
        }
        if !is_distribution(&self.mu0) {
            return Err(Error::config("initial distribution is not stochastic"));
        }
        for (s, row) in self.p.iter().enumerate() {
            if row.len() != self.n_actions {
                return Err(Error::config(format!("state {s} has {} actions", row.len())));
            }
            for (a, dist) in row.iter().enumerate() {
                if dist.len() != self.n_states || !is_distribution(dist) {
                    return Err(Error::config(format!("P[{s}][{a}] is not a distribution")));
                }
            }
            if self.terminal[s] && row.iter().any(|d| d[s] != 1.0) {
                return Err(Error::config(format!("terminal state {s} is not absorbing")));
            }
        }
        Ok(())
    }

    fn check_policy(&self, policy: &TabularPolicy) -> Result<()> {
        if policy.len() != self.n_states {
            return Err(Error::config("policy has the wrong number of states"));
        }
        for (s, row) in policy.iter().enumerate() {
            if row.len() != self.n_actions || !is_distribution(row) {
                return Err(Error::config(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(())
    }

    /// Draws one trajectory of `(s, a)` index pairs with `horizon` steps.
    pub fn sample_trajectory(&self, policy: &TabularPolicy, horizon: usize, rng: &mut SimRng) -> Vec<(usize, usize)> {
        let mut s = sample_index(&self.mu0, rng);
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let a = sample_index(&policy[s], rng);
            out.push((s, a));
            s = sample_index(&self.p[s][a], rng);
        }
        out
    }
}

fn sample_index(dist: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
}

/// `policy[s][a] = π(a | s)`.
pub type TabularPolicy = Vec<Vec<f64>>;

pub fn deterministic_policy(actions: &[usize], n_actions: usize) -> TabularPolicy {
    actions
        .iter()
        .map(|&a| {
            let mut row = vec![0.0; n_actions];
            row[a] = 1.0;
            row
        })
        .collect()
}

/// Every deterministic policy, enumerated with state 0 as the least
/// significant digit.
pub fn all_deterministic_policies(n_states: usize, n_actions: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = (n_actions as u64).pow(n_states as u32);
    (0..total).map(move |mut code| {
        (0..n_states)
            .map(|_| {
                let a = (code % n_actions as u64) as usize;
                code /= n_actions as u64;
                a
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable {
    /// `values[s][a]`.
    pub values: Vec<Vec<f64>>,
}

impl OccupancyTable {
    pub fn total(&self) -> f64 {
        self.values.iter().flatten().sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn total_variation(&self, other: &OccupancyTable) -> f64 {
        0.5 * self.flat().iter().zip(other.flat()).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// Solves `ρ = μ0 + γ P_πᵀ ρ` by fixed-point iteration until the sup-norm
/// change drops below 1e-10, then returns `(1 - γ) ρ(s) π(a | s)`.
pub fn occupancy_exact(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<OccupancyTable> {
    mdp.validate()?;
    mdp.check_policy(policy)?;
    let n = mdp.n_states;
    let mut rho = mdp.mu0.clone();
    loop {
        let mut next = mdp.mu0.clone();
        for s in 0..n {
            for (a, &pa) in policy[s].iter().enumerate() {
                let w = mdp.gamma * rho[s] * pa;
                if w == 0.0 {
                    continue;
                }
                for (dst, &p) in next.iter_mut().zip(&mdp.p[s][a]) {
                    *dst += w * p;
                }
            }
        }
        let delta = next.iter().zip(&rho).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rho = next;
        if delta < OCCUPANCY_TOL {
            break;
        }
    }
    let mut values: Vec<Vec<f64>> = (0..n)
        .map(|s| policy[s].iter().map(|pa| (1.0 - mdp.gamma) * rho[s] * pa).collect())
        .collect();
    let total: f64 = values.iter().flatten().sum();
    for v in values.iter_mut().flatten() {
        *v /= total;
    }
    Ok(OccupancyTable { values })
}

/// `γ^t`-weighted visit counts of `(s, a)` pairs, normalised to sum to one.
pub fn occupancy_empirical(
    trajectories: &[Vec<(usize, usize)>],
    n_states: usize,
    n_actions: usize,
    gamma: f64,
) -> Result<OccupancyTable> {
    let mut values = vec![vec![0.0; n_actions]; n_states];
    let mut total = 0.0;
    for traj in trajectories {
        let mut w = 1.0;
        for &(s, a) in traj {
            if s >= n_states || a >= n_actions {
                return Err(Error::config(format!("visit ({s}, {a}) outside the table")));
            }
            values[s][a] += w;
            total += w;
            w *= gamma;
            if w == 0.0 {
                break;
            }
        }
    }
    if total == 0.0 {
        return Err(Error::usage("no visits to estimate an occupancy from"));
    }
    for v in values.iter_mut().flatten() {
        *v /= total;
    }
    Ok(OccupancyTable { values })
}

/// `Σ p log(p / q)`, or `+∞` when `q` misses part of the support of `p`.
pub fn kl_tabular(p: &OccupancyTable, q: &OccupancyTable) -> Result<f64> {
    let (p, q) = (p.flat(), q.flat());
    if p.len() != q.len() {
        return Err(Error::config("occupancy tables have different shapes"));
    }
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(&q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl)
}

/// `E_{d}[log(d_T / d_B)]`.
pub fn expected_log_ratio(d: &OccupancyTable, d_t: &OccupancyTable, d_b: &OccupancyTable) -> f64 {
    let (d, t, b) = (d.flat(), d_t.flat(), d_b.flat());
    d.iter()
        .zip(t.iter().zip(&b))
        .filter(|(&di, _)| di > 0.0)
        .map(|(&di, (&ti, &bi))| di * (ti / bi).ln())
        .sum()
}

/// `-KL[d || d_T] + KL[d || d_B]`.
pub fn exploration_objective(d: &OccupancyTable, d_t: &OccupancyTable, d_b: &OccupancyTable) -> Result<f64> {
    let to_teacher = kl_tabular(d, d_t)?;
    let to_self = kl_tabular(d, d_b)?;
    Ok(-to_teacher + to_self)
}

/// Index of the first value within `tol` of the maximum.
pub fn argmax_with_tolerance(values: &[f64], tol: f64) -> Option<usize> {
    let best = values.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
    values.iter().position(|&v| v >= best - tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() || mean.is_empty() {
            return Err(Error::config("mean and variance must have the same non-zero length"));
        }
        if var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config("variances must be positive"));
        }
        Ok(DiagGaussian { mean, var })
    }

    pub fn isotropic(mean: Vec<f64>, var: f64) -> Result<Self> {
        let n = mean.len();
        DiagGaussian::new(mean, vec![var; n])
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.var)
            .zip(x)
            .map(|((m, v), xi)| -0.5 * ((xi - m).powi(2) / v + (2.0 * std::f64::consts::PI * v).ln()))
            .sum()
    }

    pub fn sample(&self, rng: &mut SimRng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(m, v)| {
                let n: f64 = rng.sample(StandardNormal);
                m + v.sqrt() * n
            })
            .collect()
    }
}

/// `d_T(x) / (d_T(x) + d_B(x))`, the optimal discriminator output.
pub fn gaussian_ratio_oracle(teacher: &DiagGaussian, other: &DiagGaussian, x: &[f64]) -> f64 {
    crate::nn::sigmoid(teacher.log_pdf(x) - other.log_pdf(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_absorbing_state() {
        let mdp = TabularMdp {
            n_states: 1,
            n_actions: 2,
            p: vec![vec![vec![1.0], vec![1.0]]],
            mu0: vec![1.0],
            terminal: vec![true],
            gamma: 0.9,
        };
        let d = occupancy_exact(&mdp, &deterministic_policy(&[1], 2)).unwrap();
        assert!((d.values[0][1] - 1.0).abs() < 1e-12);
        assert_eq!(d.values[0][0], 0.0);
    }

    #[test]
    fn two_state_cycle_geometric_series() {
        // 0 -> 1 -> 0 regardless of action; uniform policy.
        let mdp = TabularMdp {
            n_states: 2,
            n_actions: 2,
            p: vec![vec![vec![0.0, 1.0]; 2], vec![vec![1.0, 0.0]; 2]],
            mu0: vec![1.0, 0.0],
            terminal: vec![false, false],
            gamma: 0.5,
        };
        let pi = vec![vec![0.5, 0.5]; 2];
        let d = occupancy_exact(&mdp, &pi).unwrap();
        // State 0 at even t: (1-γ) Σ γ^{2k} = (1-γ)/(1-γ²) = 1/(1+γ).
        let d0 = 1.0 / 1.5;
        assert!((d.values[0][0] - d0 / 2.0).abs() < 1e-9);
        assert!((d.values[1][1] - (1.0 - d0) / 2.0).abs() < 1e-9);
        assert!((d.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn non_stochastic_policy_is_rejected() {
        let mdp = TabularMdp::from_chain(&ChainParams::default(), 0.9).unwrap();
        let bad = vec![vec![0.7, 0.7]; 8];
        assert!(matches!(occupancy_exact(&mdp, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn empirical_edge_cases() {
        let one = occupancy_empirical(&[vec![(2, 1)]], 3, 2, 0.9).unwrap();
        assert_eq!(one.values[2][1], 1.0);
        let trajs = vec![vec![(0, 1), (1, 0)], vec![(0, 0), (2, 1)]];
        let first = occupancy_empirical(&trajs, 3, 2, 0.0).unwrap();
        assert_eq!(first.values[0], vec![0.5, 0.5]);
        assert_eq!(first.values[1], vec![0.0, 0.0]);
    }

    #[test]
    fn kl_examples() {
        let p = OccupancyTable {
            values: vec![vec![1.0, 0.0]],
        };
        let q = OccupancyTable {
            values: vec![vec![0.5, 0.5]],
        };
        assert_eq!(kl_tabular(&p, &p).unwrap(), 0.0);
        assert!((kl_tabular(&p, &q).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(kl_tabular(&q, &p).unwrap(), f64::INFINITY);
    }

    #[test]
    fn gaussian_oracle_limits() {
        let t = DiagGaussian::isotropic(vec![1.0, 1.0], 0.25).unwrap();
        let b = DiagGaussian::isotropic(vec![-1.0, -1.0], 0.25).unwrap();
        assert!((gaussian_ratio_oracle(&t, &b, &[0.0, 0.0]) - 0.5).abs() < 1e-15);
        assert!((gaussian_ratio_oracle(&t, &b, &[1.0, -1.0]) - 0.5).abs() < 1e-15);
        assert!(gaussian_ratio_oracle(&t, &b, &[1.0, 1.0]) > 1.0 - 1e-6);
        assert!(DiagGaussian::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn policy_enumeration_covers_all() {
        let all: Vec<_> = all_deterministic_policies(3, 2).collect();
        assert_eq!(all.len(), 8);
        assert_eq!(all[5], vec![1, 0, 1]);
    }
}
