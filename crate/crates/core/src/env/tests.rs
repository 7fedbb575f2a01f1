use super::*;
use crate::morphology::MorphRanges;

fn pm_env(seed: u64) -> Env {
    Env::new(
        EnvConfig::point_mass(),
        point_mass_reward(),
        MorphRanges::default(),
        MorphSource::Sampled(MorphRanges::default()),
        seed,
    )
    .unwrap()
}

fn quad_env(domain: DomainRandConfig) -> Env {
    let ranges = MorphRanges::default();
    let template = MorphVector::from_raw(ranges.midpoint(), &ranges);
    let config = EnvConfig {
        domain,
        ..EnvConfig::default()
    };
    Env::new(config, RewardWeights::default(), ranges, MorphSource::Fixed(template), 3).unwrap()
}

#[test]
fn dimensions() {
    let c = EnvConfig::default();
    assert_eq!(c.obs_dim(), 20);
    assert_eq!(c.critic_dim(), 20 * 16 + 3);
    assert_eq!(c.max_steps(), 1001);
    assert!(c.max_steps() as f64 * c.control_dt() <= 20.03);
    assert_eq!(EnvConfig::point_mass().critic_dim(), 3 * 16 + 3);
}

#[test]
fn reset_history_is_zero_and_privileged_has_friction() {
    let mut env = pm_env(1);
    env.reset(1.0).unwrap();
    assert!(env.history().as_slice().iter().all(|&x| x == 0.0));
    let x = env.critic_input();
    let p = &x[x.len() - PRIVILEGED_DIM..];
    assert_eq!(p[0], env.domain().friction());
    assert!((0.5..=1.25).contains(&p[0]));
}

#[test]
fn noise_free_obs_is_state() {
    let ranges = MorphRanges::default();
    let config = EnvConfig {
        domain: DomainRandConfig::disabled(),
        ..EnvConfig::point_mass()
    };
    let mut env = Env::new(config, point_mass_reward(), ranges, MorphSource::Sampled(ranges), 5).unwrap();
    env.reset(1.5).unwrap();
    for _ in 0..20 {
        env.step(&[0.7]).unwrap();
        let s = env.point_mass_state().unwrap();
        assert_eq!(env.obs(), &[s.v, 1.5, 0.7]);
        assert_eq!(env.obs(), env.clean_obs());
    }
}

#[test]
fn seeded_runs_are_identical() {
    let run = |seed| {
        let mut env = pm_env(seed);
        env.reset(1.0).unwrap();
        (0..300)
            .map(|i| {
                let o = env.step(&[(i as f64 * 0.1).sin()]).unwrap();
                (o.reward.to_bits(), env.obs().to_vec())
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9), run(10));
}

#[test]
fn morphology_changes_only_at_reset() {
    let mut env = pm_env(2);
    let m0 = *env.morphology();
    for _ in 0..50 {
        env.step(&[0.3]).unwrap();
        assert_eq!(*env.morphology(), m0);
    }
    env.reset(0.5).unwrap();
    assert_ne!(*env.morphology(), m0);
}

#[test]
fn episode_schedule_events() {
    let mut env = pm_env(4);
    env.reset(1.0).unwrap();
    let mut pushes = vec![];
    let mut resamples = vec![];
    let last = loop {
        let o = env.step(&[0.0]).unwrap();
        for e in &o.events {
            match e {
                DomainEvent::Push(v) => {
                    assert!(v.abs() <= 1.0);
                    pushes.push(o.clock);
                }
                DomainEvent::Friction(mu) => {
                    assert!((0.5..=1.25).contains(mu));
                    resamples.push(o.clock);
                }
            }
        }
        if o.done {
            assert!(o.timeout);
            break o;
        }
    };
    assert!(last.clock <= 20.03 && last.clock > 20.0);
    assert_eq!(pushes.len(), 1);
    assert!((pushes[0] - 15.0).abs() < 1e-9);
    assert_eq!(resamples.len(), 2);
    assert!((resamples[0] - 10.0).abs() < 1e-9 && (resamples[1] - 20.0).abs() < 1e-9);
}

#[test]
fn standing_still_drift_is_small() {
    let mut env = quad_env(DomainRandConfig::disabled());
    env.reset(0.0).unwrap();
    let z0 = env.quad().unwrap().base_height();
    for _ in 0..100 {
        let o = env.step(&[0.0; 4]).unwrap();
        assert!(!o.fell);
        let z = env.quad().unwrap().base_height();
        assert!((z - z0).abs() < 0.01, "drift {}", z - z0);
    }
}

#[test]
fn contact_force_iff_penetration() {
    let mut env = quad_env(DomainRandConfig::default());
    env.reset(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    use rand::Rng;
    for _ in 0..300 {
        let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let o = env.step(&a).unwrap();
        let r = &env.quad().unwrap().report;
        for c in r.feet.iter().chain(&r.knees).chain(&r.base_corners) {
            assert_eq!(c.force[1] > 0.0, c.penetration > 0.0);
            if c.force[1] == 0.0 {
                assert_eq!(c.force[0], 0.0);
            }
        }
        if o.done {
            env.reset(1.0).unwrap();
        }
    }
}

fn passive_drop(m: &MorphVector, lift: f64, pitch: f64, vx: f64, hip_rate: f64) {
    let cfg = QuadConfig::default();
    let mut sim = QuadSim::new(cfg.clone(), QuadModel::from_morphology(m, &cfg), 0.0);
    sim.kp = 0.0;
    sim.kd = 0.0;
    sim.q[1] += lift;
    sim.q[2] = pitch;
    sim.u[0] = vx;
    sim.u[3] = hip_rate;
    let mut e = sim.energy();
    let targets = cfg.nominal_q();
    for k in 0..2000 {
        sim.step(&targets, 0.005).unwrap();
        let e1 = sim.energy();
        assert!(e1 <= e + 1e-3, "step {k}: {e} -> {e1}");
        e = e1;
    }
}

#[test]
fn passive_drop_never_gains_energy() {
    let ranges = MorphRanges::default();
    let m = MorphVector::from_raw(ranges.midpoint(), &ranges);
    passive_drop(&m, 0.1, 0.1, 0.5, 1.0);
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]
    #[test]
    fn passive_drop_energy_over_morphologies(
        seed in 0u64..1_000_000,
        lift in 0.0f64..0.2,
        pitch in -0.3f64..0.3,
        vx in -1.0f64..1.0,
        hip_rate in -1.0f64..1.0,
    ) {
        let ranges = MorphRanges::default();
        let m = crate::morphology::sample_morphology(&mut ChaCha8Rng::seed_from_u64(seed), &ranges);
        passive_drop(&m, lift, pitch, vx, hip_rate);
    }
}
