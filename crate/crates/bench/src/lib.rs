//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use sail_core::buffers::{Batch, SelfBuffer};
use sail_core::envs::{EnvSpec, SimRng, Transition};

pub fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// A random transition inside the bounds of `spec`.
pub fn random_transition(spec: &EnvSpec, rng: &mut SimRng) -> Transition {
    let mut draw = |lo: &[f64], hi: &[f64]| -> Vec<f64> { lo.iter().zip(hi).map(|(l, h)| rng.random_range(*l..*h)).collect() };
    Transition {
        s: draw(&spec.state_low, &spec.state_high),
        a: draw(&spec.action_low, &spec.action_high),
        s_next: draw(&spec.state_low, &spec.state_high),
        terminal: false,
        r_e: 0.0,
    }
}

/// A self buffer holding `n` random transitions.
pub fn filled_buffer(spec: &EnvSpec, n: usize, seed: u64) -> SelfBuffer {
    let mut r = rng(seed);
    let mut buf = SelfBuffer::new(n).expect("positive capacity");
    for _ in 0..n {
        buf.push(random_transition(spec, &mut r));
    }
    buf
}

pub fn random_batch(spec: &EnvSpec, n: usize, seed: u64) -> Batch {
    let mut r = rng(seed);
    let items: Vec<Transition> = (0..n).map(|_| random_transition(spec, &mut r)).collect();
    Batch::from_transitions(items.iter().map(|t| (t, false))).expect("non-empty batch")
}
