mod common;

use common::*;
use morphcritic_core::env::{TargetMorphology, TargetSet};
use morphcritic_core::eval::{
    advantage_noise, explained_variance, interference_probe, load_policy, morph_distance, stable_speed_metrics,
    zero_shot_eval, EvalConfig, OracleTask, ProbeConfig,
};
use morphcritic_core::morphology::MORPH_DIM;
use morphcritic_core::nets::Variant;
use morphcritic_core::ppo::TrainConfig;
use morphcritic_core::CoreError;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

/// Scan every window start independently of the metric's implementation.
fn window_oracle(speeds: &[f64], fallen: &[bool], dt: f64, window: f64) -> (f64, f64, f64) {
    let n = speeds.len();
    let run_from = |i: usize| (i..n).take_while(|&j| !fallen[j]).count();
    let longest = (0..n).map(run_from).max().unwrap_or(0);
    if longest == 0 {
        return (0.0, 0.0, 0.0);
    }
    let t_max = longest as f64 * dt;
    let t_win = window.min(t_max);
    let k = ((t_win / dt).round() as usize).max(1).min(longest);
    let mut best = f64::NEG_INFINITY;
    for i in 0..=n - k {
        if run_from(i) >= k {
            let m = speeds[i..i + k].iter().sum::<f64>() / k as f64;
            best = best.max(m);
        }
    }
    (best.max(0.0), t_win, t_max)
}

fn trajectory() -> impl Strategy<Value = (Vec<(f64, bool)>, f64, f64)> {
    (
        prop::collection::vec((-1.0..3.0f64, prop::bool::weighted(0.05)), 0..400),
        prop::sample::select(vec![0.005, 0.01, 0.02]),
        0.05..4.0f64,
    )
}

fn descriptor() -> impl Strategy<Value = [f64; MORPH_DIM]> {
    prop::array::uniform11(-1.5..1.5f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn windowed_speed_matches_exhaustive_scan((traj, dt, w) in trajectory()) {
        let speeds: Vec<f64> = traj.iter().map(|t| t.0).collect();
        let fallen: Vec<bool> = traj.iter().map(|t| t.1).collect();
        let m = stable_speed_metrics(&speeds, &fallen, dt, w);
        let (v, tw, tm) = window_oracle(&speeds, &fallen, dt, w);
        prop_assert!((m.v_bar - v).abs() < 1e-9);
        prop_assert!((m.t_win - tw).abs() < 1e-12);
        prop_assert!((m.t_max - tm).abs() < 1e-12);
        prop_assert!(m.v_bar >= 0.0);
        prop_assert!(m.t_win <= m.t_max + 1e-12);
        prop_assert!(m.t_max <= speeds.len() as f64 * dt + 1e-12);
        if m.t_max == 0.0 {
            prop_assert_eq!(m.v_bar, 0.0);
        }
    }

    #[test]
    fn distance_is_a_metric(a in descriptor(), b in descriptor(), c in descriptor()) {
        prop_assert_eq!(morph_distance(&a, &a), 0.0);
        prop_assert!((morph_distance(&a, &b) - morph_distance(&b, &a)).abs() < 1e-12);
        prop_assert!(morph_distance(&a, &c) <= morph_distance(&a, &b) + morph_distance(&b, &c) + 1e-12);
        prop_assert!(morph_distance(&a, &b) >= 0.0);
    }

    #[test]
    fn explained_variance_never_exceeds_one(
        pairs in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 2..60)
    ) {
        let g: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let v: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if let Some(ev) = explained_variance(&g, &v) {
            prop_assert!(ev <= 1.0);
        }
    }
}

#[test]
fn in_range_descriptors_are_at_most_one_apart() {
    let mut r = rng(1);
    for _ in 0..1000 {
        let a: [f64; MORPH_DIM] = std::array::from_fn(|_| r.gen_range(-1.0..=1.0));
        let b: [f64; MORPH_DIM] = std::array::from_fn(|_| r.gen_range(-1.0..=1.0));
        assert!(morph_distance(&a, &b) <= 1.0 + 1e-12);
    }
}

#[test]
fn piecewise_speeds_pick_the_fast_window() {
    let dt = 0.02;
    let mut speeds = vec![0.5; 300];
    speeds.extend(vec![2.0; 100]);
    let fallen = vec![false; speeds.len()];
    let m = stable_speed_metrics(&speeds, &fallen, dt, 3.0);
    let (v, _, _) = window_oracle(&speeds, &fallen, dt, 3.0);
    assert!((m.v_bar - v).abs() < 1e-12);
    // last 150 samples: 50 at 0.5 and 100 at 2.0
    assert!((m.v_bar - 1.5).abs() < 1e-12);
    assert!((m.t_max - 8.0).abs() < 1e-12);
}

#[test]
fn explained_variance_trivial_cases() {
    let g = [1.0, 2.0, 3.0];
    assert_eq!(explained_variance(&g, &g), Some(1.0));
    assert_eq!(explained_variance(&g, &[2.0; 3]), Some(0.0));
    let expected = 1.0 - (2.0 / 9.0) / (2.0 / 3.0);
    assert!((explained_variance(&g, &[1.0, 2.0, 2.0]).unwrap() - expected).abs() < 1e-15);
    assert_eq!(explained_variance(&[4.0; 5], &[1.0; 5]), None);
    assert_eq!(explained_variance(&[1.0], &[1.0]), None);
}

#[test]
fn advantage_noise_cases() {
    let a = [1.0, 1.0, 1.0, 3.0, 5.0, 3.0, 5.0];
    let b = [0, 0, 0, 1, 1, 2, 2];
    let p = advantage_noise(&a, &b, 4);
    assert_eq!(p[0], Some(0.0));
    assert_eq!(p[1], p[2]);
    assert_eq!(p[3], None);

    // Gaussian advantages: std / mean|A| tends to sqrt(pi / 2)
    let mut r = rng(2);
    let n = 10_000;
    let adv: Vec<f64> = (0..n).map(|_| 0.7 * r.sample::<f64, _>(StandardNormal)).collect();
    let p = advantage_noise(&adv, &vec![0; n], 1)[0].unwrap();
    let expected = (std::f64::consts::PI / 2.0).sqrt();
    assert!((p - expected).abs() / expected < 0.05, "{p}");
}

#[test]
fn probe_separates_blind_and_conditioned_critics() {
    let task = OracleTask::default();
    let cfg = ProbeConfig::default();
    for v in Variant::ALL {
        let r = interference_probe(v, &task, &cfg).unwrap();
        assert!(r.as_expected(), "{v}: {r:?}");
        if v.critic_sees_morphology() {
            assert!((r.value_a - 1.0).abs() < 0.05 && (r.value_b + 1.0).abs() < 0.05, "{v}: {r:?}");
            assert!(r.advantage_a.abs() < 0.05);
        } else {
            assert!((r.value_a - r.value_b).abs() < 1e-6, "{v}: {r:?}");
            assert!(r.value_a.abs() < 0.05);
            assert!((r.advantage_a - 1.0).abs() < 0.05);
        }
    }
    let a = interference_probe(Variant::FilmCritic, &task, &cfg).unwrap();
    let b = interference_probe(Variant::FilmCritic, &task, &cfg).unwrap();
    assert_eq!(a, b);
}

fn eval_setup() -> (TrainConfig, TargetSet, EvalConfig) {
    let mut cfg = point_mass_config(4, 8);
    cfg.env.episode_length_s = 1.0;
    let targets = TargetSet::default();
    let eval = EvalConfig {
        commands: vec![1.0, 2.0],
        seeds: vec![0, 1],
        ..EvalConfig::default()
    };
    (cfg, targets, eval)
}

#[test]
fn transfer_report_is_sorted_and_complete() {
    let (cfg, targets, eval) = eval_setup();
    let net = bundle(&cfg, Variant::FilmCritic, 3);
    let rep = zero_shot_eval(&net, &cfg, &targets, &eval).unwrap();
    assert_eq!(rep.targets.len(), targets.targets.len());
    assert!(rep.targets.windows(2).all(|w| w[0].distance <= w[1].distance));
    let first = &rep.targets[0];
    assert_eq!(first.name, "go2_like");
    assert!(first.distance.abs() < 1e-12);
    for t in &rep.targets {
        assert_eq!(t.episodes.len(), 4);
        assert!(t.episodes.iter().all(|e| e.steps == cfg.env.max_steps()));
        assert!(t.t_win_mean <= t.t_max_mean + 1e-12);
        assert!(t.v_bar_mean >= 0.0);
    }
    let steps = cfg.env.max_steps() as usize;
    assert_eq!(rep.traces.len(), steps * targets.targets.len());
    assert!(rep.traces.iter().all(|r| r.reward.is_finite() && r.value.is_finite()));
    let again = zero_shot_eval(&net, &cfg, &targets, &eval).unwrap();
    assert_eq!(rep, again);
}

#[test]
fn template_target_matches_in_distribution_runs() {
    let (cfg, _, eval) = eval_setup();
    let net = bundle(&cfg, Variant::ActorOnly, 4);
    let template = TargetSet {
        targets: vec![TargetMorphology {
            name: "template".into(),
            raw: cfg.template().raw.to_vec(),
        }],
    };
    let a = zero_shot_eval(&net, &cfg, &template, &eval).unwrap();
    let b = zero_shot_eval(&net, &cfg, &TargetSet::default(), &eval).unwrap();
    assert_eq!(a.targets[0].v_bar_mean, b.target("go2_like").unwrap().v_bar_mean);
}

#[test]
fn mismatched_checkpoints_are_rejected() {
    let (cfg, _, _) = eval_setup();
    let ckpt = bundle(&cfg, Variant::Vanilla, 1).to_checkpoint();
    assert!(load_policy(&ckpt, Some(Variant::Vanilla), &cfg).is_ok());
    assert!(matches!(
        load_policy(&ckpt, Some(Variant::FilmCritic), &cfg),
        Err(CoreError::CheckpointMismatch(_))
    ));
    let quad = TrainConfig::quad();
    assert!(matches!(load_policy(&ckpt, None, &quad), Err(CoreError::CheckpointMismatch(_))));
}

#[test]
fn bad_eval_config_is_rejected() {
    let (cfg, targets, mut eval) = eval_setup();
    eval.seeds.clear();
    let net = bundle(&cfg, Variant::Vanilla, 1);
    assert!(zero_shot_eval(&net, &cfg, &targets, &eval).is_err());
}
