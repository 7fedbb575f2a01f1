use crate::{Gradients, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling applied before every step.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Applied { grad_norm: f64, clipped: bool },
    /// A gradient entry was NaN or infinite; parameters were left untouched.
    SkippedNonFinite,
}

/// Scale `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn step(&mut self, params: &mut ParamStore, mut grads: Gradients) -> StepOutcome {
        if !grads.all_finite() {
            log::warn!("adam: non-finite gradient, update skipped at step {}", self.step);
            return StepOutcome::SkippedNonFinite;
        }
        let (grad_norm, clipped) = match self.config.max_grad_norm {
            Some(max) => {
                let n = clip_global_norm(&mut grads, max);
                (n, n > max)
            }
            None => (grads.global_norm(), false),
        };
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            ..
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (id, g) in grads.iter() {
            let m = self.first[id.index()].data_mut();
            let v = self.second[id.index()].data_mut();
            let p = params.get_mut(id).data_mut();
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        StepOutcome::Applied { grad_norm, clipped }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;

    fn single(value: f64) -> (ParamStore, crate::ParamId) {
        let mut s = ParamStore::new();
        let id = s.insert("p", Tensor::scalar(value)).unwrap();
        (s, id)
    }

    fn grads_of(store: &ParamStore, vals: &[f64]) -> Gradients {
        let mut g = Gradients::zeros_like(store);
        for (id, v) in store.ids().zip(vals) {
            g.get_mut(id).data_mut()[0] = *v;
        }
        g
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut s, id) = single(0.5);
        let mut adam = Adam::new(&s, AdamConfig::default());
        let g = grads_of(&s, &[1.0]);
        adam.step(&mut s, g);
        // lr * 1 / (1 + eps)
        let expected = 0.5 - 1e-3 / (1.0 + 1e-8);
        assert!((s.get(id).data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut s, id) = single(0.5);
        let mut adam = Adam::new(&s, AdamConfig::default());
        for _ in 0..3 {
            let g = grads_of(&s, &[0.0]);
            adam.step(&mut s, g);
        }
        assert_eq!(s.get(id).data()[0], 0.5);
    }

    #[test]
    fn clipping_scales_to_unit_norm() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::scalar(0.0)).unwrap();
        s.insert("b", Tensor::scalar(0.0)).unwrap();
        let mut g = grads_of(&s, &[6.0, 8.0]);
        let pre = clip_global_norm(&mut g, 1.0);
        assert!((pre - 10.0).abs() < 1e-12);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
        assert!((g.get(s.id("a").unwrap()).data()[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_skips_update() {
        let (mut s, id) = single(0.5);
        let mut adam = Adam::new(&s, AdamConfig::default());
        let g = grads_of(&s, &[f64::NAN]);
        let out = adam.step(&mut s, g);
        assert_eq!(out, StepOutcome::SkippedNonFinite);
        assert_eq!(s.get(id).data()[0], 0.5);
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn minimizes_quadratic() {
        let (mut s, id) = single(2.0);
        let mut adam = Adam::new(&s, AdamConfig { lr: 0.05, ..Default::default() });
        for _ in 0..500 {
            let grads = {
                let mut g = Graph::new(&s);
                let p = g.param(id);
                let q = g.add_scalar(p, -1.0);
                let l = g.square(q);
                g.backward(l).unwrap()
            };
            adam.step(&mut s, grads);
        }
        assert!((s.get(id).data()[0] - 1.0).abs() < 1e-2);
    }
}
