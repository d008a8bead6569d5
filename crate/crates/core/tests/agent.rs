use rand::{Rng, SeedableRng};
use sail_core::agent::{ActionMode, Actor, Agent, AgentConfig, Critic, FnReward};
use sail_core::buffers::Batch;
use sail_core::envs::{EnvSpec, SimRng, Transition};
use sail_core::nn::{Activation, Matrix, Mlp};

fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

fn box_spec(state_dim: usize, action_dim: usize) -> EnvSpec {
    EnvSpec {
        id: "box".into(),
        state_dim,
        action_dim,
        action_low: vec![-1.0; action_dim],
        action_high: vec![1.0; action_dim],
        state_low: vec![-1.0; state_dim],
        state_high: vec![1.0; state_dim],
        max_steps: 1,
    }
}

fn terminal_batch(states: &[Vec<f64>], actions: &[Vec<f64>]) -> Batch {
    let ts: Vec<Transition> = states
        .iter()
        .zip(actions)
        .map(|(s, a)| Transition {
            s: s.clone(),
            a: a.clone(),
            s_next: s.clone(),
            terminal: true,
            r_e: 0.0,
        })
        .collect();
    Batch::from_transitions(ts.iter().map(|t| (t, false))).unwrap()
}

#[test]
fn exploration_noise_has_the_configured_spread() {
    let spec = box_spec(2, 2);
    let cfg = AgentConfig::default();
    let mut r = rng(1);
    let actor = Actor::new(&spec, &cfg, &mut r).unwrap();
    let s = [0.1, -0.2];
    let mean = actor.act(&s).unwrap();
    assert!(mean.iter().all(|m| m.abs() < 0.1));
    let n = 10_000;
    let mut sq = 0.0;
    for _ in 0..n {
        let a = actor.select_action(&s, ActionMode::Explore, &mut r).unwrap();
        assert!(spec.action_in_bounds(&a));
        sq += (a[0] - mean[0]).powi(2);
    }
    let std = (sq / n as f64).sqrt();
    assert!((std - 0.1).abs() < 0.005, "empirical std {std}");
    assert_eq!(actor.select_action(&s, ActionMode::Evaluate, &mut r).unwrap(), mean);
}

/// `Q(s, a) = -sum_i g(a_i - t_i)` where `g` interpolates `x^2` linearly
/// between knots at multiples of 0.1, built from ReLU pairs.
fn bowl_network(state_dim: usize, target: &[f64]) -> Mlp {
    let knots: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
    let in_dim = state_dim + target.len();
    let units = 2 * knots.len() * target.len();
    let mut w1 = Matrix::zeros(in_dim, units);
    let mut b1 = vec![0.0; units];
    let mut w2 = Matrix::zeros(units, 1);
    let mut u = 0;
    for (i, t) in target.iter().enumerate() {
        for (k, b) in knots.iter().enumerate() {
            let slope_change = if k == 0 { 0.1 } else { 0.2 };
            for sign in [1.0, -1.0] {
                // relu(sign * (a_i - t_i) - b)
                w1.row_mut(state_dim + i)[u] = sign;
                b1[u] = -sign * t - b;
                w2.row_mut(u)[0] = -slope_change;
                u += 1;
            }
        }
    }
    Mlp::from_layers(vec![(w1, b1, Activation::Relu), (w2, vec![0.0], Activation::Identity)]).unwrap()
}

#[test]
fn actor_climbs_a_quadratic_bowl() {
    let spec = box_spec(1, 2);
    let target = [0.4, -0.3];
    let cfg = AgentConfig {
        actor_lr: 1e-3,
        ..AgentConfig::default()
    };
    let mut r = rng(2);
    let mut critic = Critic::new(&spec, &cfg, &mut r).unwrap();
    *critic.q1_mut() = bowl_network(1, &target);
    let q = critic
        .q_values(&Matrix::from_vec(2, 1, vec![0.0, 0.0]).unwrap(), &Matrix::from_vec(2, 2, vec![0.4, -0.3, 0.9, 0.2]).unwrap())
        .unwrap();
    assert!(q[0].abs() < 1e-12 && (q[1] + 0.5).abs() < 1e-12, "{q:?}");
    let mut actor = Actor::new(&spec, &cfg, &mut r).unwrap();
    let s = Matrix::from_vec(3, 1, vec![-0.5, 0.0, 0.5]).unwrap();
    for _ in 0..3000 {
        actor.update(&critic, &s).unwrap();
    }
    for x in [-0.5, 0.0, 0.5] {
        let a = actor.act(&[x]).unwrap();
        for (ai, ti) in a.iter().zip(&target) {
            assert!((ai - ti).abs() < 1e-2, "pi({x}) = {a:?}, target {target:?}");
        }
    }
}

#[test]
fn flat_critic_leaves_the_actor_unchanged() {
    let spec = box_spec(3, 2);
    let cfg = AgentConfig::default();
    let mut r = rng(3);
    let mut critic = Critic::new(&spec, &cfg, &mut r).unwrap();
    let last = cfg.hidden.len();
    critic.q1_mut().scale_layer(last, 0.0);
    let mut actor = Actor::new(&spec, &cfg, &mut r).unwrap();
    let before = actor.net().params().to_vec();
    let states = Matrix::from_vec(4, 3, (0..12).map(|i| i as f64 / 12.0 - 0.5).collect()).unwrap();
    for _ in 0..5 {
        actor.update(&critic, &states).unwrap();
    }
    assert_eq!(actor.net().params(), &before[..]);
}

#[test]
fn target_networks_lag_geometrically() {
    let spec = box_spec(2, 1);
    let cfg = AgentConfig::default();
    let mut r = rng(4);
    let mut critic = Critic::new(&spec, &cfg, &mut r).unwrap();
    for p in critic.q1_mut().params_mut() {
        *p += 0.5;
    }
    let gap = |c: &Critic| {
        c.q1()
            .params()
            .iter()
            .zip(c.targets().0.params())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let g0 = gap(&critic);
    let (tau, k) = (0.05, 40);
    for _ in 0..k {
        critic.soft_update_targets(tau);
    }
    let expected = g0 * (1.0 - tau).powi(k);
    assert!((gap(&critic) - expected).abs() < 1e-10 * g0, "{} vs {expected}", gap(&critic));
}

#[test]
fn behaviour_cloning_fits_a_linear_teacher() {
    let spec = box_spec(4, 2);
    let k = [[0.3, 0.0, -0.2, 0.1], [0.0, 0.4, 0.1, -0.3]];
    let teacher = |s: &[f64]| -> Vec<f64> { k.iter().map(|row| row.iter().zip(s).map(|(w, x)| w * x).sum()).collect() };
    let cfg = AgentConfig {
        actor_lr: 1e-3,
        ..AgentConfig::default()
    };
    let mut r = rng(5);
    let mut actor = Actor::new(&spec, &cfg, &mut r).unwrap();
    let draw = |r: &mut SimRng, n: usize| {
        let states: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let actions: Vec<Vec<f64>> = states.iter().map(|s| teacher(s)).collect();
        terminal_batch(&states, &actions)
    };
    for _ in 0..4000 {
        let b = draw(&mut r, 64);
        actor.bc_update(&b).unwrap();
    }
    let held_out = draw(&mut r, 1000);
    let pred = actor.actions(&held_out.states).unwrap();
    let mse = pred
        .data()
        .iter()
        .zip(held_out.actions.data())
        .map(|(p, a)| (p - a).powi(2))
        .sum::<f64>()
        / pred.data().len() as f64;
    assert!(mse < 1e-3, "held-out mse {mse}");
}

#[test]
fn actor_updates_once_per_policy_delay() {
    let spec = box_spec(2, 1);
    let cfg = AgentConfig::default();
    let mut r = rng(6);
    let mut agent = Agent::new(&spec, &cfg, &mut r).unwrap();
    let states = vec![vec![0.1, 0.2]; 8];
    let actions = vec![vec![0.3]; 8];
    let batch = terminal_batch(&states, &actions);
    let zero = FnReward(|b: &Batch| vec![0.0; b.len()]);
    for _ in 0..7 {
        agent.train_step(&batch, &zero, &mut r).unwrap();
    }
    assert_eq!(agent.critic_updates(), 7);
    assert_eq!(agent.actor_updates(), 7 / cfg.policy_delay as u64);
}
