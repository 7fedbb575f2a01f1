#![allow(dead_code)]

use morphcritic_autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use morphcritic_core::env::{Env, MorphSource};
use morphcritic_core::nets::{NetworkBundle, NetworkConfig, Variant};
use morphcritic_core::ppo::{Collector, CommandSampler, TrainConfig};
use morphcritic_core::reward::{term_value, BodyContact, BodyKind, Category, FootState, RewardInputs, RewardWeights, Term};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Same architecture as the default, narrow enough for exhaustive checks.
pub fn small_net() -> NetworkConfig {
    NetworkConfig {
        actor_hidden: vec![12, 10, 8],
        critic_hidden: vec![12, 10, 8],
        encoder_hidden: 9,
        latent_dim: 6,
        film_hidden: 7,
        ..NetworkConfig::default()
    }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Overwrite every parameter with uniform noise, so zero-initialized heads
/// take part in a gradient check.
pub fn scramble(store: &mut ParamStore, rng: &mut ChaCha8Rng, scale: f64) {
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between the analytic gradient of a scalar `f`
/// and central differences, over the parameters in `ids`.
pub fn max_grad_error<F>(store: &mut ParamStore, ids: &[ParamId], f: F, step: f64) -> f64
where
    F: Fn(&mut Graph) -> Var,
{
    let analytic = {
        let mut g = Graph::new(store);
        let out = f(&mut g);
        g.backward(out).unwrap()
    };
    let eval = |s: &ParamStore| {
        let mut g = Graph::new(s);
        let out = f(&mut g);
        g.value(out).item().unwrap()
    };
    let mut worst: f64 = 0.0;
    for &id in ids {
        for i in 0..store.get(id).len() {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + step;
            let up = eval(store);
            store.get_mut(id).data_mut()[i] = orig - step;
            let down = eval(store);
            store.get_mut(id).data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * step);
            worst = worst.max(rel_err(analytic.get(id).data()[i], fd));
        }
    }
    worst
}

/// Parameter ids whose names start with `prefix`.
pub fn ids_with_prefix(store: &ParamStore, prefix: &str) -> Vec<ParamId> {
    store.iter().filter(|(_, n, _)| n.starts_with(prefix)).map(|(id, _, _)| id).collect()
}

/// Advantages by the direct double sum `sum_l (gamma lambda)^l delta_{t+l}`,
/// stopping after the step that ends an episode.
pub fn brute_force_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: &[f64],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let next = if dones[t] {
                bootstrap[t]
            } else if t + 1 < n {
                values[t + 1]
            } else {
                last_value
            };
            rewards[t] + gamma * next - values[t]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for l in 0..n - t {
                sum += (gamma * lambda).powi(l as i32) * delta[t + l];
                if dones[t + l] {
                    break;
                }
            }
            sum
        })
        .collect()
}

pub fn point_mass_config(num_envs: usize, horizon: usize) -> TrainConfig {
    let mut cfg = TrainConfig::point_mass();
    cfg.network = small_net();
    cfg.ppo.num_envs = num_envs;
    cfg.ppo.horizon = horizon;
    cfg
}

pub fn collector(cfg: &TrainConfig, seed: u64) -> Collector {
    let envs = (0..cfg.ppo.num_envs)
        .map(|e| {
            Env::new(
                cfg.env.clone(),
                cfg.reward.clone(),
                cfg.ranges,
                MorphSource::Sampled(cfg.ranges),
                seed * 1000 + e as u64,
            )
            .unwrap()
        })
        .collect();
    Collector::new(
        envs,
        seed,
        CommandSampler {
            min: cfg.commands.min,
            max: cfg.commands.max,
        },
    )
    .unwrap()
}

pub fn bundle(cfg: &TrainConfig, variant: Variant, seed: u64) -> NetworkBundle {
    NetworkBundle::new(variant, cfg.dims(), cfg.network.clone(), seed).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_vec(r: &mut ChaCha8Rng, n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-s..s)).collect()
}

/// A random but physically plausible reward input for fuzzing.
pub fn random_reward_inputs(r: &mut ChaCha8Rng) -> RewardInputs {
    let nj = 4;
    let q_min = vec![-1.0; nj];
    let q_max = vec![1.0; nj];
    let body = |r: &mut ChaCha8Rng, kind| BodyContact {
        kind,
        force: [r.gen_range(-20.0..20.0), r.gen_range(0.0..200.0) * if r.gen_bool(0.5) { 1.0 } else { 0.0 }],
    };
    let feet = (0..2)
        .map(|_| FootState {
            contact: r.gen_bool(0.5),
            force: [r.gen_range(-50.0..50.0), r.gen_range(0.0..300.0)],
            vel: [r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0)],
            vz_prev: r.gen_range(-200.0..5.0),
            x: r.gen_range(-0.5..0.5),
            desired_contact: r.gen_range(0.0..=1.0),
            x_des: r.gen_range(-0.5..0.5),
        })
        .collect();
    RewardInputs {
        v_xy: [r.gen_range(-4.0..4.0), 0.0],
        v_cmd_xy: [r.gen_range(0.0..3.0), 0.0],
        omega_z: r.gen_range(-3.0..3.0),
        omega_cmd_z: 0.0,
        v_z: r.gen_range(-2.0..2.0),
        omega_xy: [0.0, r.gen_range(-5.0..5.0)],
        g_xy: [r.gen_range(-1.0..1.0), 0.0],
        torques: uniform_vec(r, nj, 40.0),
        q: uniform_vec(r, nj, 1.5),
        q0: uniform_vec(r, nj, 0.5),
        q_min,
        q_max,
        qd: uniform_vec(r, nj, 20.0),
        qd_prev: uniform_vec(r, nj, 20.0),
        dt: 0.02,
        action: uniform_vec(r, nj, 5.0),
        action_prev: uniform_vec(r, nj, 5.0),
        bodies: vec![body(r, BodyKind::Base), body(r, BodyKind::Knee), body(r, BodyKind::Knee), body(r, BodyKind::Foot)],
        feet,
        cop: r.gen_range(-0.4..0.4),
        support_center: r.gen_range(-0.4..0.4),
        n_contact: r.gen_range(0..=4),
        stance_width: r.gen_range(0.0..0.8),
        base_height: r.gen_range(0.0..0.5),
        h_cmd: 0.0,
        h0: 0.3,
    }
}

/// Every range invariant of the individual terms; `Err` names the first
/// violation.
pub fn check_term_bounds(x: &RewardInputs, p: &RewardWeights) -> Result<(), String> {
    for t in Term::ALL {
        let v = term_value(t, x, p);
        let ok = match t {
            Term::Lin => v > 0.0 && v <= 4.0,
            Term::Yaw | Term::Upright | Term::Cop | Term::Width => (0.0..=1.0).contains(&v),
            Term::Collision => v >= 0.0 && v.fract() == 0.0,
            _ if t.category() == Category::Penalty => v >= 0.0,
            _ => v.is_finite(),
        };
        if !ok || !v.is_finite() {
            return Err(format!("{} = {v} out of range", t.name()));
        }
    }
    Ok(())
}
