//! Training configuration.
//!
//! Stored as a flat TOML file with one section per component. Every key is
//! optional and falls back to its default, so an empty file is a valid
//! configuration:
//!
//! ```toml
//! [run]
//! algo = "sail"
//! env = "point-mass"
//! total_steps = 100000
//! seed = 1
//!
//! [buffers]
//! alpha_init = 0.5
//! anneal = "step"
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::buffers::AnnealMode;
use crate::discriminator::DiscriminatorConfig;
use crate::envs::EnvId;
use crate::error::{Error, Result};

/// Training variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    /// Adaptive teacher buffer, alpha annealed per `buffers.anneal`.
    Sail,
    /// Adaptive teacher buffer, alpha held at its initial value.
    SailFixedAlpha,
    /// Alpha held at 0: batches never contain teacher transitions.
    SailNoLfd,
    /// Promotion disabled: the teacher buffer keeps the original demonstrations.
    SailNoAdapt,
    /// Discriminator negatives come from rollouts of the current policy.
    SailOnpolicy,
    /// Plain actor-critic on the episodic reward.
    Td3Sparse,
    /// Plain actor-critic on the per-step reward.
    Td3Dense,
    /// Behaviour cloning of the demonstrations.
    Bc,
    /// SAIL with reward `pofd_lambda * r_e + r'`.
    PofdMix,
}

pub const ALL_ALGOS: [Algo; 9] = [
    Algo::Sail,
    Algo::SailFixedAlpha,
    Algo::SailNoLfd,
    Algo::SailNoAdapt,
    Algo::SailOnpolicy,
    Algo::Td3Sparse,
    Algo::Td3Dense,
    Algo::Bc,
    Algo::PofdMix,
];

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Sail => "sail",
            Algo::SailFixedAlpha => "sail-fixed-alpha",
            Algo::SailNoLfd => "sail-no-lfd",
            Algo::SailNoAdapt => "sail-no-adapt",
            Algo::SailOnpolicy => "sail-onpolicy",
            Algo::Td3Sparse => "td3-sparse",
            Algo::Td3Dense => "td3-dense",
            Algo::Bc => "bc",
            Algo::PofdMix => "pofd-mix",
        }
    }

    pub fn uses_demonstrations(self) -> bool {
        !matches!(self, Algo::Td3Sparse | Algo::Td3Dense)
    }

    pub fn uses_discriminator(self) -> bool {
        !matches!(self, Algo::Td3Sparse | Algo::Td3Dense | Algo::Bc)
    }

    pub fn promotes(self) -> bool {
        self.uses_discriminator() && self != Algo::SailNoAdapt
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let found = match s {
            "no-lfd" => Some(Algo::SailNoLfd),
            "no-adapt" => Some(Algo::SailNoAdapt),
            "onpolicy" => Some(Algo::SailOnpolicy),
            other => ALL_ALGOS.iter().copied().find(|a| a.as_str() == other),
        };
        found.ok_or_else(|| {
            let known: Vec<_> = ALL_ALGOS.iter().map(|a| a.as_str()).collect();
            Error::config(format!("unknown algorithm '{s}' (known: {})", known.join(", ")))
        })
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnealKind {
    Step,
    Linear,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub algo: Algo,
    pub env: EnvId,
    pub total_steps: u64,
    pub seed: u64,
    /// Initial environment steps taken with uniform random actions; no
    /// learning happens before they are done.
    pub warmup_steps: u64,
    pub batch_size: usize,
    /// When set, the reward becomes `pofd_lambda * r_e + r'`.
    pub pofd_lambda: Option<f64>,
    /// Gradient steps for behaviour cloning.
    pub bc_steps: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            algo: Algo::Sail,
            env: EnvId::PointMass,
            total_steps: 100_000,
            seed: 1,
            warmup_steps: 1000,
            batch_size: 256,
            pofd_lambda: None,
            bc_steps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferSection {
    pub self_capacity: usize,
    /// Teacher buffer size in trajectories.
    pub teacher_capacity: usize,
    pub alpha_init: f64,
    pub anneal: AnnealKind,
    /// Environment steps over which `linear` annealing reaches zero.
    pub anneal_span: usize,
}

impl Default for BufferSection {
    fn default() -> Self {
        BufferSection {
            self_capacity: 100_000,
            teacher_capacity: 64,
            alpha_init: 0.5,
            anneal: AnnealKind::Step,
            anneal_span: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub explore_noise: f64,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub policy_delay: usize,
    pub twin_critics: bool,
    pub actor_final_scale: f64,
    pub actor_preact_reg: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        let a = AgentConfig::default();
        AgentSection {
            hidden: a.hidden,
            actor_lr: a.actor_lr,
            critic_lr: a.critic_lr,
            gamma: a.gamma,
            tau: a.tau,
            explore_noise: a.explore_noise,
            target_noise: a.target_noise,
            target_noise_clip: a.target_noise_clip,
            policy_delay: a.policy_delay,
            twin_critics: a.twin_critics,
            actor_final_scale: a.actor_final_scale,
            actor_preact_reg: a.actor_preact_reg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorSection {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gp_coeff: f64,
    pub clamp_eps: f64,
    pub input_gain: f64,
}

impl Default for DiscriminatorSection {
    fn default() -> Self {
        let d = DiscriminatorConfig::default();
        DiscriminatorSection {
            hidden: d.hidden,
            lr: d.lr,
            gp_coeff: d.gp_coeff,
            clamp_eps: d.clamp_eps,
            input_gain: d.input_gain,
        }
    }
}

/// Update cadences in environment steps. Every `critic_every` environment
/// steps the agent takes `critic_steps` critic updates; likewise for the
/// discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CadenceSection {
    pub critic_every: u64,
    pub critic_steps: u64,
    pub disc_every: u64,
    pub disc_steps: u64,
}

impl Default for CadenceSection {
    fn default() -> Self {
        CadenceSection {
            critic_every: 1000,
            critic_steps: 1000,
            disc_every: 500,
            disc_steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub interval: u64,
    pub episodes: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            interval: 2048,
            episodes: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub run: RunSection,
    pub buffers: BufferSection,
    pub agent: AgentSection,
    pub discriminator: DiscriminatorSection,
    pub cadence: CadenceSection,
    pub eval: EvalSection,
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainConfig::from_toml_str(&text).map_err(|e| match e {
            Error::Config(message) => Error::config(format!("{}: {message}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn agent_config(&self) -> AgentConfig {
        let a = &self.agent;
        AgentConfig {
            hidden: a.hidden.clone(),
            actor_lr: a.actor_lr,
            critic_lr: a.critic_lr,
            gamma: a.gamma,
            tau: a.tau,
            explore_noise: a.explore_noise,
            target_noise: a.target_noise,
            target_noise_clip: a.target_noise_clip,
            policy_delay: a.policy_delay,
            twin_critics: a.twin_critics,
            actor_final_scale: a.actor_final_scale,
            actor_preact_reg: a.actor_preact_reg,
        }
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        let d = &self.discriminator;
        DiscriminatorConfig {
            hidden: d.hidden.clone(),
            lr: d.lr,
            gp_coeff: d.gp_coeff,
            clamp_eps: d.clamp_eps,
            input_gain: d.input_gain,
        }
    }

    pub fn anneal_mode(&self) -> AnnealMode {
        match self.buffers.anneal {
            AnnealKind::Step => AnnealMode::StepToZero,
            AnnealKind::Linear => AnnealMode::Linear {
                span: self.buffers.anneal_span,
            },
            AnnealKind::Fixed => AnnealMode::Fixed,
        }
    }

    /// The reward mixing coefficient in effect, if any.
    pub fn effective_pofd_lambda(&self) -> Option<f64> {
        match (self.run.algo, self.run.pofd_lambda) {
            (Algo::PofdMix, None) => Some(0.1),
            (algo, lambda) if algo.uses_discriminator() => lambda,
            _ => None,
        }
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("run.batch_size", self.run.batch_size as u64),
            ("buffers.self_capacity", self.buffers.self_capacity as u64),
            ("buffers.teacher_capacity", self.buffers.teacher_capacity as u64),
            ("buffers.anneal_span", self.buffers.anneal_span as u64),
            ("cadence.critic_every", self.cadence.critic_every),
            ("cadence.critic_steps", self.cadence.critic_steps),
            ("cadence.disc_every", self.cadence.disc_every),
            ("cadence.disc_steps", self.cadence.disc_steps),
            ("eval.interval", self.eval.interval),
            ("eval.episodes", self.eval.episodes as u64),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{key} must be at least 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.buffers.alpha_init) {
            return Err(Error::config("buffers.alpha_init must lie in [0, 1]"));
        }
        if let Some(l) = self.run.pofd_lambda {
            if !l.is_finite() {
                return Err(Error::config("run.pofd_lambda must be finite"));
            }
        }
        self.agent_config().validate()?;
        let d = &self.discriminator;
        if !(d.lr > 0.0)
            || d.gp_coeff < 0.0
            || !(d.clamp_eps > 0.0 && d.clamp_eps < 0.5)
            || !(d.input_gain > 0.0 && d.input_gain.is_finite())
            || d.hidden.contains(&0)
        {
            return Err(Error::config(
                "discriminator needs lr > 0, gp_coeff >= 0, clamp_eps in (0, 0.5), input_gain > 0 and positive widths",
            ));
        }
        Ok(())
    }
}
