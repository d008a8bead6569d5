//! The training loop and its variants.
//!
//! Collection is trajectory-granular: a whole episode is rolled out, pushed
//! to the self buffer and offered to the teacher buffer, then any
//! discriminator and critic updates that have come due (counted in
//! environment steps) are run. Evaluation is deterministic and uses its own
//! random stream, so it never perturbs training.

mod config;
mod runlog;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};

pub use config::{
    AgentSection, Algo, AnnealKind, BufferSection, CadenceSection, DiscriminatorSection, EvalSection, RunSection,
    TrainConfig, ALL_ALGOS,
};
pub use runlog::{Record, RunLog, RunLogWriter, RUNLOG_COLUMNS};

use crate::agent::{ActionMode, Actor, Agent, EpisodicReward, MixedReward, RewardModel};
use crate::buffers::{sample_mixture, Batch, MixtureSampler, SelfBuffer, TeacherBuffer};
use crate::discriminator::{DiscLoss, Discriminator};
use crate::envs::{
    random_policy_returns, rollout_raw, sparsify_trajectory, uniform_action, Env, SimRng, Trajectory, Transition,
    RANDOM_BASELINE_EPISODES,
};
use crate::error::{Error, Result};

/// ChaCha stream used for evaluation rollouts.
pub const EVAL_STREAM: u64 = 1;
/// ChaCha stream used for the random-policy screen.
const SCREEN_STREAM: u64 = 2;

/// Mean and population standard deviation of deterministic-policy returns.
pub fn evaluate(actor: &Actor, env: &mut dyn Env, n_episodes: usize, rng: &mut SimRng) -> Result<(f64, f64)> {
    evaluate_policy(env, n_episodes, rng, |s| actor.act(s))
}

/// Like [`evaluate`] for any deterministic policy.
pub fn evaluate_policy<P>(env: &mut dyn Env, n_episodes: usize, rng: &mut SimRng, mut policy: P) -> Result<(f64, f64)>
where
    P: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if n_episodes == 0 {
        return Err(Error::usage("evaluation needs at least one episode"));
    }
    let action_dim = env.spec().action_dim;
    let mut returns = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let mut failure = None;
        let steps = rollout_raw(
            env,
            |s, _| match policy(s) {
                Ok(a) => a,
                Err(e) => {
                    failure.get_or_insert(e);
                    vec![0.0; action_dim]
                }
            },
            rng,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        returns.push(steps.iter().map(|s| s.dense_reward).sum::<f64>());
    }
    Ok(mean_std(&returns))
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Outcome of comparing demonstrations with the random policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Screen {
    pub teacher_mean: f64,
    pub random_mean: f64,
    pub holds: bool,
}

/// Compares demonstration returns with a random-policy baseline. A failing
/// screen is only reported; training proceeds.
pub fn screen_demonstrations(env: &mut dyn Env, demos: &[Trajectory], seed: u64) -> Result<Screen> {
    if demos.is_empty() {
        return Err(Error::usage("no demonstrations to screen"));
    }
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(SCREEN_STREAM);
    let random = random_policy_returns(env, RANDOM_BASELINE_EPISODES, &mut rng)?;
    let teacher_mean = demos.iter().map(|t| t.episodic_return).sum::<f64>() / demos.len() as f64;
    let random_mean = random.iter().sum::<f64>() / random.len() as f64;
    let screen = Screen {
        teacher_mean,
        random_mean,
        holds: teacher_mean > random_mean,
    };
    if !screen.holds {
        warn!("demonstrations (mean {teacher_mean:.3}) do not beat the random policy (mean {random_mean:.3})");
    }
    Ok(screen)
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: RunLog,
    pub agent: Agent,
    pub screen: Option<Screen>,
    pub env_steps: u64,
    pub promotions: u64,
    pub teacher_returns: Vec<f64>,
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    env: Box<dyn Env>,
    eval_env: Box<dyn Env>,
    rng: SimRng,
    agent: Agent,
    disc: Option<Discriminator>,
    teacher: Option<TeacherBuffer>,
    self_buf: SelfBuffer,
    sampler: MixtureSampler,
    pofd_lambda: Option<f64>,
    /// Transitions of the current policy since the last policy update.
    fresh: Vec<Transition>,
    env_steps: u64,
    disc_due: u64,
    critic_due: u64,
    last_train_return: f64,
    last_disc_loss: f64,
    last_critic_loss: f64,
}

impl Trainer<'_> {
    fn threshold(&self) -> f64 {
        self.teacher
            .as_ref()
            .map_or(f64::NAN, |t| t.threshold().unwrap_or(f64::NAN))
    }

    fn promotions(&self) -> u64 {
        self.teacher.as_ref().map_or(0, |t| t.promotions())
    }

    fn evaluate(&mut self) -> Result<(f64, f64)> {
        let mut rng = SimRng::seed_from_u64(self.cfg.run.seed);
        rng.set_stream(EVAL_STREAM);
        evaluate(&self.agent.actor, self.eval_env.as_mut(), self.cfg.eval.episodes, &mut rng)
    }

    fn record(&mut self) -> Result<Record> {
        let (mean, std) = self.evaluate()?;
        Ok(self.snapshot(mean, std))
    }

    fn snapshot(&self, eval_mean: f64, eval_std: f64) -> Record {
        Record {
            env_steps: self.env_steps,
            eval_mean_return: eval_mean,
            eval_std,
            train_episode_return: self.last_train_return,
            teacher_threshold: self.threshold(),
            alpha: self.sampler.alpha(),
            disc_loss: self.last_disc_loss,
            critic_loss: self.last_critic_loss,
            promotions_count: self.promotions(),
        }
    }

    /// One episode: uniform random actions during warm-up, noisy policy
    /// actions afterwards. Returns the sparsified trajectory and the
    /// per-step rewards.
    fn collect(&mut self) -> Result<(Trajectory, Vec<f64>)> {
        let warmup = self.cfg.run.warmup_steps;
        let spec = self.env.spec().clone();
        let mut t = self.env_steps;
        let actor = &self.agent.actor;
        let mut failure = None;
        let steps = rollout_raw(
            self.env.as_mut(),
            |s, rng| {
                let random = t < warmup;
                t += 1;
                if random {
                    return uniform_action(&spec, rng);
                }
                actor.select_action(s, ActionMode::Explore, rng).unwrap_or_else(|e| {
                    failure.get_or_insert(e);
                    vec![0.0; spec.action_dim]
                })
            },
            &mut self.rng,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        let dense: Vec<f64> = steps.iter().map(|s| s.dense_reward).collect();
        Ok((sparsify_trajectory(steps)?, dense))
    }

    fn disc_burst(&mut self) -> Result<()> {
        let (Some(disc), Some(teacher)) = (self.disc.as_mut(), self.teacher.as_ref()) else {
            return Ok(());
        };
        let n = self.cfg.run.batch_size;
        let mut loss = DiscLoss {
            classification: f64::NAN,
            penalty: f64::NAN,
            total: f64::NAN,
        };
        let onpolicy = self.cfg.run.algo == Algo::SailOnpolicy && !self.fresh.is_empty();
        for _ in 0..self.cfg.cadence.disc_steps {
            let positives = teacher.sample(n, &mut self.rng)?;
            loss = if onpolicy {
                let idx: Vec<usize> = (0..n).map(|_| self.rng.random_range(0..self.fresh.len())).collect();
                let fresh = Batch::from_transitions(idx.into_iter().map(|i| (&self.fresh[i], false)))?;
                disc.onpolicy_disc_update(&positives, &fresh, &mut self.rng)?
            } else {
                let negatives = self.self_buf.sample(n, &mut self.rng)?;
                disc.disc_update(&positives, &negatives, &mut self.rng)?
            };
        }
        self.last_disc_loss = loss.total;
        debug!(
            "step {}: disc classification {:.4}, penalty {:.4}",
            self.env_steps, loss.classification, loss.penalty
        );
        Ok(())
    }

    fn critic_burst(&mut self) -> Result<()> {
        let n = self.cfg.run.batch_size;
        let reward: Box<dyn RewardModel + '_> = match (&self.disc, self.pofd_lambda) {
            (Some(d), Some(lambda)) => Box::new(MixedReward { disc: d, lambda }),
            (Some(d), None) => Box::new(d),
            (None, _) => Box::new(EpisodicReward),
        };
        let mut total = 0.0;
        let steps = self.cfg.cadence.critic_steps;
        for _ in 0..steps {
            let batch = sample_mixture(&self.self_buf, self.teacher.as_ref(), &self.sampler, n, &mut self.rng)?;
            total += self.agent.train_step(&batch, reward.as_ref(), &mut self.rng)?.critic_loss;
        }
        self.last_critic_loss = total / steps as f64;
        self.fresh.clear();
        if log::log_enabled!(log::Level::Debug) {
            self.log_reward_stats(reward.as_ref())?;
        }
        Ok(())
    }

    fn log_reward_stats(&self, reward: &dyn RewardModel) -> Result<()> {
        let mut rng = SimRng::seed_from_u64(self.env_steps);
        let n = self.cfg.run.batch_size;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let own = self.self_buf.sample(n, &mut rng)?;
        let own_r = reward.rewards(&own)?;
        let own_q = self.agent.critic.q_values(&own.states, &self.agent.actor.actions(&own.states)?)?;
        let (teach_r, teach_q) = match &self.teacher {
            Some(t) => {
                let b = t.sample(n, &mut rng)?;
                let q = self.agent.critic.q_values(&b.states, &self.agent.actor.actions(&b.states)?)?;
                (mean(&reward.rewards(&b)?), mean(&q))
            }
            None => (f64::NAN, f64::NAN),
        };
        debug!(
            "step {}: reward self {:.4} teacher {:.4}; Q(s, pi(s)) self {:.3} teacher {:.3}; critic loss {:.5}",
            self.env_steps,
            mean(&own_r),
            teach_r,
            mean(&own_q),
            teach_q,
            self.last_critic_loss
        );
        Ok(())
    }

    fn step_episode(&mut self) -> Result<()> {
        let (traj, dense) = self.collect()?;
        let len = traj.len() as u64;
        let prev_steps = self.env_steps;
        self.env_steps += len;
        self.last_train_return = traj.episodic_return;

        if self.cfg.run.algo == Algo::Td3Dense {
            for (t, r) in traj.transitions.iter().zip(&dense) {
                let mut t = t.clone();
                t.r_e = *r;
                self.self_buf.push(t);
            }
        } else {
            self.self_buf.push_trajectory(&traj);
        }
        let mut promoted = false;
        if self.cfg.run.algo.promotes() {
            if let Some(teacher) = self.teacher.as_mut() {
                promoted = teacher.maybe_promote(&traj)?;
            }
        }
        self.sampler.anneal(promoted, len as usize);
        if self.cfg.run.algo == Algo::SailOnpolicy {
            self.fresh.extend(traj.transitions.iter().cloned());
        }

        let warmup = self.cfg.run.warmup_steps;
        if self.env_steps > warmup {
            let learning = self.env_steps - prev_steps.max(warmup);
            self.disc_due += learning;
            self.critic_due += learning;
            while self.disc_due >= self.cfg.cadence.disc_every {
                self.disc_due -= self.cfg.cadence.disc_every;
                self.disc_burst()?;
            }
            while self.critic_due >= self.cfg.cadence.critic_every {
                self.critic_due -= self.cfg.cadence.critic_every;
                self.critic_burst()?;
            }
        }
        Ok(())
    }
}

/// Runs the configured variant and hands every record to `sink` as soon as
/// it exists. On a numerical failure a final diagnostic record (NaN
/// evaluation) is emitted before the error is returned.
pub fn train(cfg: &TrainConfig, demos: &[Trajectory], sink: &mut dyn FnMut(&Record) -> Result<()>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let algo = cfg.run.algo;
    if algo.uses_demonstrations() && demos.is_empty() {
        return Err(Error::usage(format!("{algo} needs at least one demonstration")));
    }
    let mut screen_env = cfg.run.env.make();
    let spec = screen_env.spec().clone();
    for d in demos {
        d.validate()?;
        if d.transitions.iter().any(|t| t.s.len() != spec.state_dim || t.a.len() != spec.action_dim) {
            return Err(Error::config("demonstrations do not match the environment dimensions"));
        }
    }
    let screen = if algo.uses_demonstrations() {
        Some(screen_demonstrations(screen_env.as_mut(), demos, cfg.run.seed)?)
    } else {
        None
    };

    let mut rng = SimRng::seed_from_u64(cfg.run.seed);
    let agent = Agent::new(&spec, &cfg.agent_config(), &mut rng)?;
    let disc = if algo.uses_discriminator() {
        Some(Discriminator::for_env(&spec, &cfg.discriminator_config(), &mut rng)?)
    } else {
        None
    };
    let teacher = if algo.uses_demonstrations() {
        Some(TeacherBuffer::new(cfg.buffers.teacher_capacity.max(demos.len()), demos.to_vec())?)
    } else {
        None
    };
    let sampler = match algo {
        Algo::Sail | Algo::SailNoAdapt | Algo::SailOnpolicy | Algo::PofdMix => {
            MixtureSampler::new(cfg.buffers.alpha_init, cfg.anneal_mode())?
        }
        Algo::SailFixedAlpha => MixtureSampler::new(cfg.buffers.alpha_init, crate::buffers::AnnealMode::Fixed)?,
        Algo::SailNoLfd | Algo::Td3Sparse | Algo::Td3Dense | Algo::Bc => {
            MixtureSampler::new(0.0, crate::buffers::AnnealMode::Fixed)?
        }
    };

    let mut tr = Trainer {
        cfg,
        eval_env: cfg.run.env.make(),
        env: cfg.run.env.make(),
        rng,
        agent,
        disc,
        teacher,
        self_buf: SelfBuffer::new(cfg.buffers.self_capacity)?,
        sampler,
        pofd_lambda: cfg.effective_pofd_lambda(),
        fresh: Vec::new(),
        env_steps: 0,
        disc_due: 0,
        critic_due: 0,
        last_train_return: f64::NAN,
        last_disc_loss: f64::NAN,
        last_critic_loss: f64::NAN,
    };
    let mut log = RunLog::default();
    let mut emit = |log: &mut RunLog, rec: Record| -> Result<()> {
        sink(&rec)?;
        log.records.push(rec);
        Ok(())
    };

    if algo == Algo::Bc {
        let result = run_bc(&mut tr);
        return finish(tr, log, screen, result, &mut emit);
    }

    let first = tr.record()?;
    emit(&mut log, first)?;
    let mut next_eval = cfg.eval.interval;
    let mut result = Ok(());
    while tr.env_steps < cfg.run.total_steps {
        if let Err(e) = tr.step_episode() {
            result = Err(e);
            break;
        }
        if tr.env_steps >= next_eval {
            while next_eval <= tr.env_steps {
                next_eval += cfg.eval.interval;
            }
            match tr.record() {
                Ok(rec) => emit(&mut log, rec)?,
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
    }
    if result.is_ok() && log.last().is_some_and(|r| r.env_steps != tr.env_steps) {
        match tr.record() {
            Ok(rec) => emit(&mut log, rec)?,
            Err(e) => result = Err(e),
        }
    }
    info!(
        "{algo} seed {} finished: {} env steps, {} promotions",
        cfg.run.seed,
        tr.env_steps,
        tr.promotions()
    );
    finish(tr, log, screen, result, &mut emit)
}

fn run_bc(tr: &mut Trainer<'_>) -> Result<()> {
    let teacher = tr.teacher.as_ref().expect("bc has a teacher buffer");
    let mut loss = f64::NAN;
    for _ in 0..tr.cfg.run.bc_steps {
        let batch = teacher.sample(tr.cfg.run.batch_size, &mut tr.rng)?;
        loss = tr.agent.actor.bc_update(&batch)?;
    }
    tr.last_critic_loss = loss;
    Ok(())
}

fn finish(
    mut tr: Trainer<'_>,
    mut log: RunLog,
    screen: Option<Screen>,
    result: Result<()>,
    emit: &mut dyn FnMut(&mut RunLog, Record) -> Result<()>,
) -> Result<TrainOutcome> {
    match result {
        Ok(()) => {
            if tr.cfg.run.algo == Algo::Bc {
                let rec = tr.record()?;
                emit(&mut log, rec)?;
            }
            Ok(TrainOutcome {
                log,
                promotions: tr.promotions(),
                teacher_returns: tr.teacher.as_ref().map(|t| t.returns()).unwrap_or_default(),
                env_steps: tr.env_steps,
                agent: tr.agent,
                screen,
            })
        }
        Err(e) => {
            warn!("run aborted after {} env steps: {e}", tr.env_steps);
            if matches!(e, Error::Numerical(_)) && log.last().is_none_or(|r| r.env_steps < tr.env_steps) {
                let mut rec = tr.snapshot(f64::NAN, f64::NAN);
                rec.critic_loss = f64::NAN;
                emit(&mut log, rec)?;
            }
            Err(e)
        }
    }
}
