//! Self-adaptive off-policy imitation learning from sparse episodic rewards.
//!
//! An off-policy actor-critic learns from rewards shaped by a discriminator
//! that separates a teacher demonstration buffer from the agent's own replay
//! buffer. Whenever the agent produces a trajectory whose episodic return
//! beats the worst stored demonstration, that trajectory is promoted into the
//! teacher buffer, so the imitation target improves as the agent does.
//!
//! Modules, bottom-up:
//!
//! - [`nn`]: matrices, MLPs with exact gradients, Adam, checkpoints
//! - [`envs`]: environments, sparse episodic rewards, scripted teachers
//! - [`buffers`]: self replay ring, adaptive teacher buffer, mixture sampling
//! - [`discriminator`]: gradient-penalised discriminator and shaped reward
//! - [`agent`]: twin-critic deterministic actor-critic and behaviour cloning
//! - [`trainer`]: the training loop, its ablations, evaluation and run logs
//! - [`diagnostics`]: exact occupancy measures and density-ratio oracles
//! - [`experiment`]: sweep manifests and aggregation used by the CLI

pub mod agent;
pub mod buffers;
pub mod diagnostics;
pub mod discriminator;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod trainer;

pub use error::{Error, Result};
