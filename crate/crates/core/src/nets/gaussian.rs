//! Diagonal Gaussian policy head.

use std::f64::consts::{E, PI};

use morphcritic_autodiff::{Graph, Var};

use crate::error::{CoreError, Result};

/// Log-density of `action` and entropy of `N(mean, diag(std²))`.
pub fn log_prob_and_entropy(mean: &[f64], std: &[f64], action: &[f64]) -> Result<(f64, f64)> {
    if mean.len() != std.len() || mean.len() != action.len() {
        return Err(CoreError::Dimension {
            what: "gaussian action",
            expected: mean.len(),
            got: action.len().min(std.len()),
        });
    }
    if let Some(&s) = std.iter().find(|&&s| !(s > 0.0)) {
        return Err(CoreError::NonPositiveStd(s));
    }
    let mut lp = 0.0;
    let mut ent = 0.0;
    for ((&m, &s), &a) in mean.iter().zip(std).zip(action) {
        let z = (a - m) / s;
        lp += -0.5 * z * z - s.ln() - 0.5 * (2.0 * PI).ln();
        ent += 0.5 * (2.0 * PI * E).ln() + s.ln();
    }
    Ok((lp, ent))
}

/// Per-row log-probabilities `[n, 1]` for a state-independent `log_std`
/// row `[1, d]`.
pub fn graph_log_prob(g: &mut Graph, mean: Var, log_std: Var, actions: Var) -> Result<Var> {
    let (n, d) = (g.value(mean).rows(), g.value(mean).cols());
    let ls = g.broadcast_rows(log_std, n)?;
    let neg_ls = g.neg(ls);
    let inv_std = g.exp(neg_ls);
    let diff = g.sub(actions, mean)?;
    let z = g.mul(diff, inv_std)?;
    let z2 = g.square(z);
    let half = g.scale(z2, -0.5);
    let terms = g.sub(half, ls)?;
    let summed = g.sum_cols(terms)?;
    Ok(g.add_scalar(summed, -0.5 * d as f64 * (2.0 * PI).ln()))
}

/// Entropy of the diagonal Gaussian; independent of the state.
pub fn graph_entropy(g: &mut Graph, log_std: Var) -> Var {
    let d = g.value(log_std).cols();
    let s = g.sum(log_std);
    g.add_scalar(s, 0.5 * d as f64 * (2.0 * PI * E).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use morphcritic_autodiff::{ParamStore, Tensor};

    #[test]
    fn mode_log_prob() {
        let (lp, _) = log_prob_and_entropy(&[0.3, -1.0, 2.0], &[1.0; 3], &[0.3, -1.0, 2.0]).unwrap();
        assert!((lp + 1.5 * (2.0 * PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn unit_entropy_per_dim() {
        let (_, ent) = log_prob_and_entropy(&[0.0], &[1.0], &[0.0]).unwrap();
        assert!((ent - 1.418_938_533_204_672_7).abs() < 1e-12);
        assert!((ent - 1.41894).abs() < 1e-5);
    }

    #[test]
    fn identical_distributions_give_unit_ratio() {
        let (a, _) = log_prob_and_entropy(&[0.1, 0.2], &[0.7, 1.3], &[0.9, -0.4]).unwrap();
        let (b, _) = log_prob_and_entropy(&[0.1, 0.2], &[0.7, 1.3], &[0.9, -0.4]).unwrap();
        assert_eq!((a - b).exp(), 1.0);
    }

    #[test]
    fn rejects_non_positive_std() {
        assert!(matches!(
            log_prob_and_entropy(&[0.0], &[0.0], &[0.0]),
            Err(CoreError::NonPositiveStd(_))
        ));
        assert!(log_prob_and_entropy(&[0.0], &[-1.0], &[0.0]).is_err());
    }

    #[test]
    fn graph_matches_scalar_version() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let mean = g.input(Tensor::new(vec![2, 2], vec![0.1, 0.2, -0.3, 0.4]).unwrap());
        let ls = g.input(Tensor::row(&[0.5f64.ln(), 0.2]));
        let act = g.input(Tensor::new(vec![2, 2], vec![1.0, -1.0, 0.0, 0.5]).unwrap());
        let lp = graph_log_prob(&mut g, mean, ls, act).unwrap();
        let ent = graph_entropy(&mut g, ls);
        let std = [0.5, 0.2f64.exp()];
        let (l0, e0) = log_prob_and_entropy(&[0.1, 0.2], &std, &[1.0, -1.0]).unwrap();
        let (l1, _) = log_prob_and_entropy(&[-0.3, 0.4], &std, &[0.0, 0.5]).unwrap();
        assert!((g.value(lp).data()[0] - l0).abs() < 1e-12);
        assert!((g.value(lp).data()[1] - l1).abs() < 1e-12);
        assert!((g.value(ent).data()[0] - e0).abs() < 1e-12);
    }
}
