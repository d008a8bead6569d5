//! Replay storage: the agent's own FIFO ring, the self-improving teacher
//! buffer, and the sampler that mixes the two.

use std::path::Path;

use rand::Rng;

use crate::envs::{write_demonstrations, SimRng, Trajectory, Transition};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Column-major view of sampled transitions, ready to feed the networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Matrix,
    pub actions: Matrix,
    pub next_states: Matrix,
    pub terminal: Vec<bool>,
    pub r_e: Vec<f64>,
    /// Which rows were drawn from the teacher buffer.
    pub from_teacher: Vec<bool>,
}

impl Batch {
    pub fn from_transitions<'a>(items: impl IntoIterator<Item = (&'a Transition, bool)>) -> Result<Self> {
        let items: Vec<_> = items.into_iter().collect();
        let Some((first, _)) = items.first() else {
            return Err(Error::usage("cannot build an empty batch"));
        };
        let (sd, ad) = (first.s.len(), first.a.len());
        let n = items.len();
        let mut states = Vec::with_capacity(n * sd);
        let mut actions = Vec::with_capacity(n * ad);
        let mut next_states = Vec::with_capacity(n * sd);
        let mut terminal = Vec::with_capacity(n);
        let mut r_e = Vec::with_capacity(n);
        let mut from_teacher = Vec::with_capacity(n);
        for (t, teacher) in items {
            if t.s.len() != sd || t.a.len() != ad || t.s_next.len() != sd {
                return Err(Error::config("transitions in a batch have mixed dimensions"));
            }
            states.extend_from_slice(&t.s);
            actions.extend_from_slice(&t.a);
            next_states.extend_from_slice(&t.s_next);
            terminal.push(t.terminal);
            r_e.push(t.r_e);
            from_teacher.push(teacher);
        }
        Ok(Batch {
            states: Matrix::from_vec(n, sd, states)?,
            actions: Matrix::from_vec(n, ad, actions)?,
            next_states: Matrix::from_vec(n, sd, next_states)?,
            terminal,
            r_e,
            from_teacher,
        })
    }

    pub fn len(&self) -> usize {
        self.terminal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminal.is_empty()
    }

    pub fn teacher_fraction(&self) -> f64 {
        self.from_teacher.iter().filter(|&&t| t).count() as f64 / self.len() as f64
    }

    /// `[s | a]` per row.
    pub fn state_actions(&self) -> Matrix {
        self.states.hcat(&self.actions)
    }
}

/// Fixed-capacity FIFO of the agent's own transitions.
#[derive(Debug, Clone)]
pub struct SelfBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
    pushes: u64,
}

impl SelfBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("self buffer capacity must be positive"));
        }
        Ok(SelfBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
            pushes: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn total_pushes(&self) -> u64 {
        self.pushes
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.pushes += 1;
    }

    pub fn push_trajectory(&mut self, traj: &Trajectory) {
        for t in &traj.transitions {
            self.push(t.clone());
        }
    }

    /// Stored transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(&self.items[..split])
    }

    pub fn sample_indices(&self, n: usize, rng: &mut SimRng) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::usage("cannot sample from an empty self buffer"));
        }
        Ok((0..n).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn sample(&self, n: usize, rng: &mut SimRng) -> Result<Batch> {
        let idx = self.sample_indices(n, rng)?;
        Batch::from_transitions(idx.into_iter().map(|i| (&self.items[i], false)))
    }
}

/// Demonstration store that only ever admits trajectories scoring strictly
/// above its current worst one.
#[derive(Debug, Clone)]
pub struct TeacherBuffer {
    capacity: usize,
    trajectories: Vec<Trajectory>,
    /// `(trajectory, step)` for every stored transition.
    flat: Vec<(u32, u32)>,
    promotions: u64,
}

impl TeacherBuffer {
    pub fn new(capacity: usize, demos: Vec<Trajectory>) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("teacher buffer capacity must be positive"));
        }
        if demos.is_empty() {
            return Err(Error::usage("teacher buffer needs at least one demonstration"));
        }
        if demos.len() > capacity {
            return Err(Error::config(format!(
                "{} demonstrations exceed the teacher buffer capacity of {capacity}",
                demos.len()
            )));
        }
        if demos.iter().any(Trajectory::is_empty) {
            return Err(Error::usage("demonstration trajectories must be non-empty"));
        }
        let mut buf = TeacherBuffer {
            capacity,
            trajectories: demos,
            flat: Vec::new(),
            promotions: 0,
        };
        buf.reindex();
        Ok(buf)
    }

    fn reindex(&mut self) {
        self.flat.clear();
        for (ti, traj) in self.trajectories.iter().enumerate() {
            for si in 0..traj.len() {
                self.flat.push((ti as u32, si as u32));
            }
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn transition_count(&self) -> usize {
        self.flat.len()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn promotions(&self) -> u64 {
        self.promotions
    }

    pub fn returns(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.episodic_return).collect()
    }

    /// Lowest stored episodic return, ignoring zero placeholder scores.
    /// Negative infinity when every stored score is zero.
    pub fn threshold(&self) -> Result<f64> {
        if self.trajectories.is_empty() {
            return Err(Error::usage("threshold of an empty teacher buffer"));
        }
        let min = self
            .trajectories
            .iter()
            .map(|t| t.episodic_return)
            .filter(|&r| r != 0.0)
            .fold(f64::INFINITY, f64::min);
        Ok(if min == f64::INFINITY { f64::NEG_INFINITY } else { min })
    }

    /// Admits `traj` if its episodic return strictly exceeds the threshold,
    /// evicting the lowest-scoring stored trajectory when full.
    pub fn maybe_promote(&mut self, traj: &Trajectory) -> Result<bool> {
        if traj.is_empty() {
            return Err(Error::usage("cannot promote an empty trajectory"));
        }
        let score = traj.episodic_return;
        if score == 0.0 || !score.is_finite() || score <= self.threshold()? {
            return Ok(false);
        }
        if self.trajectories.len() >= self.capacity {
            let worst = self
                .trajectories
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.episodic_return.total_cmp(&b.1.episodic_return))
                .map(|(i, _)| i)
                .expect("buffer is non-empty");
            self.trajectories.remove(worst);
        }
        self.trajectories.push(traj.clone());
        self.promotions += 1;
        self.reindex();
        Ok(true)
    }

    pub fn sample_refs(&self, n: usize, rng: &mut SimRng) -> Vec<&Transition> {
        (0..n)
            .map(|_| {
                let (ti, si) = self.flat[rng.random_range(0..self.flat.len())];
                &self.trajectories[ti as usize].transitions[si as usize]
            })
            .collect()
    }

    pub fn sample(&self, n: usize, rng: &mut SimRng) -> Result<Batch> {
        Batch::from_transitions(self.sample_refs(n, rng).into_iter().map(|t| (t, true)))
    }

    /// Dumps the stored trajectories in the demonstration file format.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        write_demonstrations(path, &self.trajectories, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnnealMode {
    /// Drop to zero on the first promotion.
    StepToZero,
    /// Decrease linearly to zero over `span` environment steps, starting
    /// with the first promotion.
    Linear { span: usize },
    /// Never change.
    Fixed,
}

/// Holds the teacher fraction `alpha` of each training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSampler {
    alpha: f64,
    initial: f64,
    mode: AnnealMode,
    started: bool,
    progress: usize,
}

impl MixtureSampler {
    pub fn new(alpha: f64, mode: AnnealMode) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::config(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if let AnnealMode::Linear { span: 0 } = mode {
            return Err(Error::config("linear anneal span must be positive"));
        }
        Ok(MixtureSampler {
            alpha,
            initial: alpha,
            mode,
            started: false,
            progress: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mode(&self) -> AnnealMode {
        self.mode
    }

    /// Records one event covering `elapsed` environment steps, `promoted`
    /// telling whether a promotion happened during it.
    pub fn anneal(&mut self, promoted: bool, elapsed: usize) {
        match self.mode {
            AnnealMode::Fixed => {}
            AnnealMode::StepToZero => {
                if promoted {
                    self.alpha = 0.0;
                }
            }
            AnnealMode::Linear { span } => {
                self.started |= promoted;
                if self.started {
                    self.progress = self.progress.saturating_add(elapsed);
                    let frac = 1.0 - (self.progress as f64 / span as f64).min(1.0);
                    self.alpha = self.alpha.min(self.initial * frac);
                }
            }
        }
    }

    /// Number of teacher rows in a batch of `n`: `alpha * n` rounded.
    pub fn teacher_count(&self, n: usize) -> usize {
        ((self.alpha * n as f64).round() as usize).min(n)
    }
}

/// Draws `round(alpha * n)` transitions from the teacher buffer and the rest
/// from the self buffer, uniformly within each.
pub fn sample_mixture(
    self_buf: &SelfBuffer,
    teacher: Option<&TeacherBuffer>,
    sampler: &MixtureSampler,
    n: usize,
    rng: &mut SimRng,
) -> Result<Batch> {
    if n == 0 {
        return Err(Error::usage("batch size must be at least 1"));
    }
    let n_teacher = sampler.teacher_count(n);
    let n_self = n - n_teacher;
    let mut rows: Vec<(&Transition, bool)> = Vec::with_capacity(n);
    if n_teacher > 0 {
        let teacher = teacher
            .filter(|t| t.transition_count() > 0)
            .ok_or_else(|| Error::usage("alpha > 0 but the teacher buffer is empty"))?;
        rows.extend(teacher.sample_refs(n_teacher, rng).into_iter().map(|t| (t, true)));
    }
    if n_self > 0 {
        let idx = self_buf.sample_indices(n_self, rng)?;
        rows.extend(idx.into_iter().map(|i| (self_buf.get(i), false)));
    }
    Batch::from_transitions(rows)
}
