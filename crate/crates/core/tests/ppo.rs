mod common;

use common::*;
use morphcritic_autodiff::{Graph, ParamStore, Tensor};
use morphcritic_core::morphology::MORPH_DIM;
use morphcritic_core::nets::{graph_log_prob, Variant};
use morphcritic_core::ppo::{clipped_surrogate, gae_sequence, train, Learner, RolloutBuffer};
use proptest::prelude::*;

fn gae_case() -> impl Strategy<Value = (Vec<(f64, f64, bool, f64)>, f64, f64, f64)> {
    (
        prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, prop::bool::weighted(0.2), -5.0..5.0f64), 1..=32),
        -5.0..5.0f64,
        0.5..=1.0f64,
        0.0..=1.0f64,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gae_matches_double_sum((steps, last, gamma, lambda) in gae_case()) {
        let r: Vec<f64> = steps.iter().map(|s| s.0).collect();
        let v: Vec<f64> = steps.iter().map(|s| s.1).collect();
        let d: Vec<bool> = steps.iter().map(|s| s.2).collect();
        let b: Vec<f64> = steps.iter().map(|s| if s.2 { s.3 } else { 0.0 }).collect();
        let (adv, ret) = gae_sequence(&r, &v, &d, &b, last, gamma, lambda);
        let oracle = brute_force_gae(&r, &v, &d, &b, last, gamma, lambda);
        for t in 0..r.len() {
            prop_assert!((adv[t] - oracle[t]).abs() < 1e-10);
            prop_assert_eq!(ret[t] - v[t], adv[t]);
        }
    }

    #[test]
    fn lambda_zero_gives_td_error((steps, last, gamma, _l) in gae_case()) {
        let r: Vec<f64> = steps.iter().map(|s| s.0).collect();
        let v: Vec<f64> = steps.iter().map(|s| s.1).collect();
        let d = vec![false; r.len()];
        let b = vec![0.0; r.len()];
        let (adv, _) = gae_sequence(&r, &v, &d, &b, last, gamma, 0.0);
        for t in 0..r.len() {
            let next = if t + 1 < r.len() { v[t + 1] } else { last };
            prop_assert_eq!(adv[t], r[t] + gamma * next - v[t]);
        }
    }
}

fn collected(variant: Variant, seed: u64) -> (RolloutBuffer, Learner) {
    let cfg = point_mass_config(6, 20);
    let mut c = collector(&cfg, seed);
    let mut buf = c.collect(&bundle(&cfg, variant, seed), cfg.ppo.horizon).unwrap();
    buf.compute_advantages(cfg.ppo.gamma, cfg.ppo.lambda);
    let learner = Learner::new(bundle(&cfg, variant, seed), cfg.ppo.clone(), seed).unwrap();
    (buf, learner)
}

#[test]
fn buffer_holds_envs_times_horizon() {
    for (n, h) in [(1, 1), (3, 7), (6, 20)] {
        let cfg = point_mass_config(n, h);
        let mut c = collector(&cfg, 2);
        let buf = c.collect(&bundle(&cfg, Variant::FilmCritic, 2), h).unwrap();
        assert_eq!(buf.len(), n * h);
        assert_eq!(buf.obs.len(), n * h * cfg.dims().obs_dim);
        assert_eq!(buf.critic.len(), n * h * cfg.dims().critic_dim);
        assert_eq!(buf.morph.len(), n * h * MORPH_DIM);
        assert_eq!(buf.last_values.len(), n);
        assert!(buf.advantages.is_none());
    }
}

#[test]
fn collection_is_deterministic() {
    for v in Variant::ALL {
        let (a, _) = collected(v, 11);
        let (b, _) = collected(v, 11);
        assert_eq!(a, b, "{v}");
    }
    let (a, _) = collected(Variant::Vanilla, 11);
    let (b, _) = collected(Variant::Vanilla, 12);
    assert_ne!(a.actions, b.actions);
}

#[test]
fn returns_minus_values_are_advantages() {
    let (buf, _) = collected(Variant::ActorCriticConcat, 4);
    let adv = buf.advantages.as_ref().unwrap();
    let ret = buf.returns.as_ref().unwrap();
    for i in 0..buf.len() {
        assert_eq!(ret[i] - buf.values[i], adv[i]);
    }
}

#[test]
fn first_minibatch_has_unit_ratios() {
    for v in Variant::ALL {
        let (buf, learner) = collected(v, 5);
        let idx: Vec<usize> = (0..buf.len()).rev().step_by(4).collect();
        let stats = learner.probe(&buf, &idx).unwrap();
        assert_eq!(stats.kl, 0.0, "{v}");
        assert_eq!(stats.clip_fraction, 0.0, "{v}");
    }
}

#[test]
fn update_moves_parameters_and_reports_sane_stats() {
    let (buf, mut learner) = collected(Variant::FilmCritic, 6);
    let before = learner.bundle().clone();
    let stats = learner.update(&buf).unwrap();
    assert!(!stats.aborted);
    assert_eq!(stats.minibatch_steps, 20);
    assert!((0.0..=1.0).contains(&stats.clip_fraction));
    assert!(stats.value_loss >= 0.0 && stats.surrogate_loss.is_finite());
    let cfg = learner.config();
    assert!(stats.lr >= cfg.lr_min && stats.lr <= cfg.lr_max);
    assert_ne!(&before, learner.bundle());
}

#[test]
fn non_finite_loss_aborts_and_halves_lr() {
    let (mut buf, mut learner) = collected(Variant::Vanilla, 7);
    let lr = learner.lr();
    buf.advantages.as_mut().unwrap().fill(f64::NAN);
    let before = learner.bundle().clone();
    let stats = learner.update(&buf).unwrap();
    assert!(stats.aborted);
    assert_eq!(stats.minibatch_steps, 0);
    assert_eq!(learner.lr(), lr * 0.5);
    assert_eq!(&before, learner.bundle());
}

#[test]
fn update_before_gae_is_rejected() {
    let cfg = point_mass_config(2, 4);
    let mut c = collector(&cfg, 1);
    let buf = c.collect(&bundle(&cfg, Variant::Vanilla, 1), 4).unwrap();
    let mut learner = Learner::new(bundle(&cfg, Variant::Vanilla, 1), cfg.ppo.clone(), 1).unwrap();
    assert!(learner.update(&buf).is_err());
}

/// Recompute the buffer's critic values and advantages with a shifted
/// morphology column.
fn advantages_with_shifted_morph(variant: Variant, shift: f64) -> (Vec<f64>, Vec<f64>) {
    let cfg = point_mass_config(4, 16);
    let mut net = bundle(&cfg, variant, 9);
    // lift the zero-initialized FiLM heads so every variant's critic is generic
    scramble(net.params_mut(), &mut rng(9), 0.3);
    let mut c = collector(&cfg, 9);
    let mut buf = c.collect(&net, cfg.ppo.horizon).unwrap();
    let n = buf.len();
    let shifted: Vec<f64> = buf.morph.iter().map(|m| m + shift).collect();
    let x = Tensor::new(vec![n, cfg.dims().critic_dim], buf.critic.clone()).unwrap();
    let m = Tensor::new(vec![n, MORPH_DIM], shifted).unwrap();
    buf.values = net.values(&x, Some(&m)).unwrap();
    let last_x = Tensor::new(
        vec![buf.num_envs, cfg.dims().critic_dim],
        buf.critic[(buf.horizon - 1) * buf.num_envs * cfg.dims().critic_dim..].to_vec(),
    )
    .unwrap();
    let last_m: Vec<f64> = c.envs().iter().flat_map(|e| e.morphology().normalized.map(|m| m + shift)).collect();
    let last_m = Tensor::new(vec![buf.num_envs, MORPH_DIM], last_m).unwrap();
    buf.last_values = net.values(&last_x, Some(&last_m)).unwrap();
    buf.compute_advantages(cfg.ppo.gamma, cfg.ppo.lambda);
    (buf.values, buf.advantages.unwrap())
}

#[test]
fn advantage_baseline_sees_morphology_only_when_the_critic_does() {
    for v in Variant::ALL {
        let (v0, a0) = advantages_with_shifted_morph(v, 0.0);
        let (v1, a1) = advantages_with_shifted_morph(v, 0.4);
        if v.critic_sees_morphology() {
            assert!(v0.iter().zip(&v1).all(|(p, q)| p != q), "{v}");
            assert!(a0.iter().zip(&a1).any(|(p, q)| p != q), "{v}");
        } else {
            assert_eq!(v0, v1, "{v}");
            assert_eq!(a0, a1, "{v}");
        }
    }
}

#[test]
fn surrogate_closed_forms() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    // r = 1 everywhere: surrogate equals the mean advantage
    let lp = g.input(Tensor::column(&[-1.0, 0.5, 2.0]));
    let adv = g.input(Tensor::column(&[1.0, -2.0, 4.0]));
    let s = clipped_surrogate(&mut g, lp, lp, adv, 0.2).unwrap();
    assert!((g.value(s).data()[0] - 1.0).abs() < 1e-15);
    // A > 0 and r = 2: contribution clipped to 1.2 A
    let new = g.input(Tensor::column(&[2f64.ln()]));
    let old = g.input(Tensor::column(&[0.0]));
    let a = g.input(Tensor::column(&[3.0]));
    let s = clipped_surrogate(&mut g, new, old, a, 0.2).unwrap();
    assert!((g.value(s).data()[0] - 3.6).abs() < 1e-12);
    // A < 0 and r = 2: the unclipped (more pessimistic) term wins
    let a = g.input(Tensor::column(&[-3.0]));
    let s = clipped_surrogate(&mut g, new, old, a, 0.2).unwrap();
    assert!((g.value(s).data()[0] + 6.0).abs() < 1e-12);
}

#[test]
fn surrogate_gradient_wrt_action_mean_matches_finite_differences() {
    let mut r = rng(21);
    for case in 0..20 {
        let mut store = ParamStore::new();
        let mean = store.insert("mean", random_tensor(&mut r, 1, 3, 1.0)).unwrap();
        let log_std = random_tensor(&mut r, 1, 3, 0.5);
        let action = random_tensor(&mut r, 1, 3, 1.5);
        let adv = if case % 2 == 0 { 1.3 } else { -0.7 };
        // old log-prob close to the current one so the ratio sits inside the
        // clip range at half of the cases and outside at the others
        let old = {
            let mut g = Graph::new(&store);
            let m = g.param(mean);
            let s = g.input(log_std.clone());
            let a = g.input(action.clone());
            let lp = graph_log_prob(&mut g, m, s, a).unwrap();
            g.value(lp).data()[0] + if case % 4 < 2 { 0.05 } else { -0.6 }
        };
        let f = |g: &mut Graph| {
            let m = g.param(mean);
            let s = g.input(log_std.clone());
            let a = g.input(action.clone());
            let lp = graph_log_prob(g, m, s, a).unwrap();
            let o = g.input(Tensor::column(&[old]));
            let adv = g.input(Tensor::column(&[adv]));
            clipped_surrogate(g, lp, o, adv, 0.2).unwrap()
        };
        let err = max_grad_error(&mut store, &[mean], f, 1e-6);
        assert!(err < 1e-4, "case {case}: rel err {err}");
    }
}

#[test]
fn vanilla_checkpoint_carries_no_morphology_parameters() {
    let cfg = point_mass_config(2, 8);
    let mut c = cfg.clone();
    c.ppo.total_steps = 16;
    let out = train(&c, Variant::Vanilla, 0, None).unwrap();
    let ckpt = out.bundle.to_checkpoint();
    assert!(ckpt.params.names().all(|n| !n.starts_with("encoder") && !n.starts_with("film")));
    let film = train(&c, Variant::FilmCritic, 0, None).unwrap().bundle.to_checkpoint();
    assert!(film.params.names().any(|n| n.starts_with("film")));
}

#[test]
fn training_logs_are_reproducible() {
    let mut cfg = point_mass_config(4, 16);
    cfg.ppo.total_steps = 4 * 16 * 3;
    let dir = tempfile::tempdir().unwrap();
    let a = train(&cfg, Variant::ActorOnly, 8, Some(&dir.path().join("a"))).unwrap();
    let b = train(&cfg, Variant::ActorOnly, 8, Some(&dir.path().join("b"))).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.log.len(), 3);
    let read = |p: &str| std::fs::read(dir.path().join(p).join("training_log.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert!(dir.path().join("a/final.ckpt").exists());
}
