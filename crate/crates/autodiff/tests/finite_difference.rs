//! Analytic gradients against central finite differences.

use morphcritic_autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Compare every parameter entry's gradient with a central difference.
fn check<F>(store: &mut ParamStore, f: F, step: f64, tol: f64)
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
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for i in 0..store.get(id).len() {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + step;
            let up = eval(store);
            store.get_mut(id).data_mut()[i] = orig - step;
            let down = eval(store);
            store.get_mut(id).data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * step);
            let an = analytic.get(id).data()[i];
            assert!(
                rel_err(an, fd) < tol || (an - fd).abs() < 1e-9,
                "{}[{i}]: analytic {an} vs fd {fd}",
                store.name(id)
            );
        }
    }
}

#[test]
fn elu_backward_at_minus_one() {
    let mut s = ParamStore::new();
    s.insert("x", Tensor::scalar(-1.0)).unwrap();
    let id = s.id("x").unwrap();
    check(
        &mut s,
        |g| {
            let x = g.param(id);
            let y = g.elu(x);
            g.sum(y)
        },
        1e-6,
        1e-6,
    );
}

#[test]
fn linear_weight_gradient_is_ones_times_input() {
    let mut s = ParamStore::new();
    let w = s.insert("w", Tensor::new(vec![3, 2], vec![0.3, -0.2, 0.5, 0.1, -0.7, 0.9]).unwrap()).unwrap();
    let b = s.insert("b", Tensor::row(&[0.0, 0.0])).unwrap();
    let x = Tensor::row(&[1.5, -2.0, 0.25]);
    let grads = {
        let mut g = Graph::new(&s);
        let xi = g.input(x.clone());
        let (wv, bv) = (g.param(w), g.param(b));
        let y = g.linear(wv, bv, xi).unwrap();
        let out = g.sum(y);
        g.backward(out).unwrap()
    };
    // d sum(x W + b) / dW[i][j] = x[i]
    for i in 0..3 {
        for j in 0..2 {
            assert_eq!(grads.get(w).data()[i * 2 + j], x.data()[i]);
        }
    }
    check(
        &mut s,
        |g| {
            let xi = g.input(x.clone());
            let (wv, bv) = (g.param(w), g.param(b));
            let y = g.linear(wv, bv, xi).unwrap();
            g.sum(y)
        },
        1e-6,
        1e-6,
    );
}

#[test]
fn three_layer_elu_mlp() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut s = ParamStore::new();
    let dims = [5, 8, 6, 1];
    let mut layers = Vec::new();
    for (i, w) in dims.windows(2).enumerate() {
        let wid = s.insert(format!("w{i}"), random_tensor(&mut rng, &[w[0], w[1]], 0.8)).unwrap();
        let bid = s.insert(format!("b{i}"), random_tensor(&mut rng, &[1, w[1]], 0.3)).unwrap();
        layers.push((wid, bid));
    }
    let x = random_tensor(&mut rng, &[4, 5], 1.0);
    check(
        &mut s,
        |g| {
            let mut h = g.input(x.clone());
            for (i, &(w, b)) in layers.iter().enumerate() {
                let (wv, bv) = (g.param(w), g.param(b));
                h = g.linear(wv, bv, h).unwrap();
                if i + 1 < layers.len() {
                    h = g.elu(h);
                }
            }
            let sq = g.square(h);
            g.mean(sq)
        },
        1e-5,
        1e-4,
    );
}

#[test]
fn composite_ops_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut s = ParamStore::new();
    let a = s.insert("a", random_tensor(&mut rng, &[3, 4], 1.0)).unwrap();
    let r = s.insert("r", random_tensor(&mut rng, &[1, 2], 0.5)).unwrap();
    check(
        &mut s,
        |g| {
            let av = g.param(a);
            let rv = g.param(r);
            let left = g.slice_cols(av, 0, 2).unwrap();
            let right = g.slice_cols(av, 2, 4).unwrap();
            let rb = g.broadcast_rows(rv, 3).unwrap();
            let m = g.mul(left, rb).unwrap();
            let e = g.exp(right);
            let c = g.concat_cols(&[m, e]).unwrap();
            let s1 = g.scale(c, 0.7);
            let s2 = g.add_scalar(s1, 0.1);
            let rows = g.sum_cols(s2).unwrap();
            let sq = g.square(rows);
            g.sum(sq)
        },
        1e-6,
        1e-6,
    );
}

#[test]
fn backward_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = ParamStore::new();
    let w = s.insert("w", random_tensor(&mut rng, &[16, 32], 1.0)).unwrap();
    let x = random_tensor(&mut rng, &[9, 16], 1.0);
    let run = || {
        let mut g = Graph::new(&s);
        let xi = g.input(x.clone());
        let wv = g.param(w);
        let y = g.matmul(xi, wv).unwrap();
        let y = g.elu(y);
        let out = g.mean(y);
        g.backward(out).unwrap()
    };
    let (g1, g2) = (run(), run());
    let bits = |g: &morphcritic_autodiff::Gradients| g.get(w).data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&g1), bits(&g2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn clipped_norm_never_exceeds_one(vals in proptest::collection::vec(-50.0f64..50.0, 1..20)) {
        let mut s = ParamStore::new();
        s.insert("p", Tensor::row(&vals)).unwrap();
        let id = s.id("p").unwrap();
        let mut grads = morphcritic_autodiff::Gradients::zeros_like(&s);
        grads.get_mut(id).data_mut().copy_from_slice(&vals);
        let pre = morphcritic_autodiff::clip_global_norm(&mut grads, 1.0);
        if pre > 1.0 {
            prop_assert!(grads.global_norm() <= 1.0 + 1e-12);
        } else {
            prop_assert!((grads.global_norm() - pre).abs() < 1e-15);
        }
    }

    #[test]
    fn checkpoint_round_trip(vals in proptest::collection::vec(proptest::num::f64::ANY, 0..40), key in "[a-z]{1,8}") {
        let mut s = ParamStore::new();
        s.insert(key.clone(), Tensor::row(&vals)).unwrap();
        let c = morphcritic_autodiff::Checkpoint::new(s).with_meta("k", key);
        let bytes = c.to_bytes();
        let back = morphcritic_autodiff::Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
    }
}
