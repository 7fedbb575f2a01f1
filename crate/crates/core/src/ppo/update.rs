//! The PPO parameter update.

use morphcritic_autodiff::{Adam, AdamConfig, Graph, StepOutcome, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::buffer::RolloutBuffer;
use super::PpoConfig;
use crate::error::{CoreError, Result};
use crate::morphology::MORPH_DIM;
use crate::nets::{graph_entropy, graph_log_prob, NetworkBundle};

/// KL-targeted step-size rule with a dead zone between half and twice the
/// target. Negative estimates count as zero.
pub fn adaptive_lr(kl: f64, lr: f64, config: &PpoConfig) -> f64 {
    let kl = kl.max(0.0);
    let next = if kl > 2.0 * config.kl_target {
        lr / 1.5
    } else if kl < 0.5 * config.kl_target {
        lr * 1.5
    } else {
        lr
    };
    next.clamp(config.lr_min, config.lr_max)
}

/// Mean clipped surrogate `E[min(r A, clip(r, 1-eps, 1+eps) A)]` with
/// `r = exp(logp - old_logp)`; all inputs are `[n, 1]`.
pub fn clipped_surrogate(g: &mut Graph, logp: Var, old_logp: Var, adv: Var, clip: f64) -> Result<Var> {
    let diff = g.sub(logp, old_logp)?;
    let ratio = g.exp(diff);
    let s1 = g.mul(ratio, adv)?;
    let clipped = g.clamp(ratio, 1.0 - clip, 1.0 + clip);
    let s2 = g.mul(clipped, adv)?;
    let m = g.minimum(s1, s2)?;
    Ok(g.mean(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean over minibatches of `mean(old_logp - new_logp)`, unclamped.
    pub kl: f64,
    pub clip_fraction: f64,
    /// Learning rate after the update.
    pub lr: f64,
    pub minibatch_steps: usize,
    /// A non-finite loss or gradient stopped the update early.
    pub aborted: bool,
}

/// Gathered tensors for one minibatch.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub obs: Tensor,
    pub critic: Tensor,
    pub morph: Tensor,
    pub actions: Tensor,
    pub old_log_probs: Tensor,
    pub old_values: Tensor,
    pub returns: Tensor,
    /// Normalized within the minibatch.
    pub advantages: Tensor,
}

impl Minibatch {
    pub fn gather(buf: &RolloutBuffer, idx: &[usize]) -> Result<Self> {
        let adv = buf
            .advantages
            .as_ref()
            .ok_or_else(|| CoreError::Config("advantages requested before GAE".into()))?;
        let ret = buf.returns.as_ref().expect("returns are set together with advantages");
        let rows = |src: &[f64], w: usize| -> Result<Tensor> {
            let mut out = Vec::with_capacity(idx.len() * w);
            for &i in idx {
                out.extend_from_slice(&src[i * w..(i + 1) * w]);
            }
            Ok(Tensor::new(vec![idx.len(), w], out)?)
        };
        let a: Vec<f64> = idx.iter().map(|&i| adv[i]).collect();
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let norm: Vec<f64> = a.iter().map(|x| (x - mean) / (std + 1e-8)).collect();
        Ok(Self {
            obs: rows(&buf.obs, buf.obs_dim)?,
            critic: rows(&buf.critic, buf.critic_dim)?,
            morph: rows(&buf.morph, MORPH_DIM)?,
            actions: rows(&buf.actions, buf.action_dim)?,
            old_log_probs: rows(&buf.log_probs, 1)?,
            old_values: rows(&buf.values, 1)?,
            returns: rows(ret, 1)?,
            advantages: Tensor::new(vec![idx.len(), 1], norm)?,
        })
    }
}

struct Losses {
    total: Var,
    surrogate: f64,
    value: f64,
    entropy: f64,
    kl: f64,
    clip_fraction: f64,
}

fn minibatch_losses(g: &mut Graph, bundle: &NetworkBundle, mb: &Minibatch, cfg: &PpoConfig) -> Result<Losses> {
    let o = g.input(mb.obs.clone());
    let x = g.input(mb.critic.clone());
    let m = g.input(mb.morph.clone());
    let out = bundle.forward(g, o, x, Some(m))?;
    let act = g.input(mb.actions.clone());
    let logp = graph_log_prob(g, out.mean, out.log_std, act)?;
    let old_logp = g.input(mb.old_log_probs.clone());
    let adv = g.input(mb.advantages.clone());
    let surr = clipped_surrogate(g, logp, old_logp, adv, cfg.clip)?;

    let ret = g.input(mb.returns.clone());
    let err = g.sub(out.value, ret)?;
    let sq = g.square(err);
    let value_loss = if cfg.clip_value_loss {
        let old_v = g.input(mb.old_values.clone());
        let dv = g.sub(out.value, old_v)?;
        let dv = g.clamp(dv, -cfg.clip, cfg.clip);
        let v_clipped = g.add(old_v, dv)?;
        let err_c = g.sub(v_clipped, ret)?;
        let sq_c = g.square(err_c);
        let worst = g.maximum(sq, sq_c)?;
        g.mean(worst)
    } else {
        g.mean(sq)
    };
    let entropy = graph_entropy(g, out.log_std);

    let neg_surr = g.neg(surr);
    let vl = g.scale(value_loss, cfg.value_coef);
    let ent = g.scale(entropy, -cfg.entropy_coef);
    let partial = g.add(neg_surr, vl)?;
    let total = g.add(partial, ent)?;

    let lp = g.value(logp).data();
    let olp = mb.old_log_probs.data();
    let n = lp.len() as f64;
    let kl = olp.iter().zip(lp).map(|(o, l)| o - l).sum::<f64>() / n;
    let clipped = olp
        .iter()
        .zip(lp)
        .filter(|(o, l)| ((*l - *o).exp() - 1.0).abs() > cfg.clip)
        .count();
    Ok(Losses {
        total,
        surrogate: -g.value(surr).data()[0],
        value: g.value(value_loss).data()[0],
        entropy: g.value(entropy).data()[0],
        kl,
        clip_fraction: clipped as f64 / n,
    })
}

/// Owns the networks and the optimizer state across iterations.
#[derive(Debug, Clone)]
pub struct Learner {
    bundle: NetworkBundle,
    adam: Adam,
    config: PpoConfig,
    rng: ChaCha8Rng,
}

impl Learner {
    pub fn new(bundle: NetworkBundle, config: PpoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let adam = Adam::new(
            bundle.params(),
            AdamConfig {
                lr: config.learning_rate,
                max_grad_norm: Some(config.max_grad_norm),
                ..AdamConfig::default()
            },
        );
        Ok(Self {
            bundle,
            adam,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn bundle(&self) -> &NetworkBundle {
        &self.bundle
    }

    pub fn into_bundle(self) -> NetworkBundle {
        self.bundle
    }

    pub fn lr(&self) -> f64 {
        self.adam.lr()
    }

    pub fn config(&self) -> &PpoConfig {
        &self.config
    }

    /// Epochs of shuffled minibatch steps over a buffer with advantages.
    /// Before each step the KL rule adapts the step size to the KL of the
    /// current minibatch, so a runaway update is damped within the epoch.
    pub fn update(&mut self, buf: &RolloutBuffer) -> Result<UpdateStats> {
        if buf.advantages.is_none() {
            return Err(CoreError::Config("ppo update before GAE".into()));
        }
        let cfg = self.config.clone();
        let n = buf.len();
        let mb_size = n / cfg.minibatches;
        let mut order: Vec<usize> = (0..n).collect();
        let mut stats = UpdateStats::default();
        'epochs: for _ in 0..cfg.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(mb_size).take(cfg.minibatches) {
                let mb = Minibatch::gather(buf, chunk)?;
                let mut g = Graph::new(self.bundle.params());
                let losses = minibatch_losses(&mut g, &self.bundle, &mb, &cfg)?;
                let total = g.value(losses.total).data()[0];
                if !total.is_finite() {
                    self.abort(&mut stats, "non-finite loss");
                    break 'epochs;
                }
                let grads = g.backward(losses.total)?;
                drop(g);
                if cfg.adaptive_lr {
                    let lr = adaptive_lr(losses.kl, self.adam.lr(), &cfg);
                    self.adam.set_lr(lr);
                }
                if let StepOutcome::SkippedNonFinite = self.adam.step(self.bundle.params_mut(), grads) {
                    self.abort(&mut stats, "non-finite gradient");
                    break 'epochs;
                }
                stats.surrogate_loss += losses.surrogate;
                stats.value_loss += losses.value;
                stats.entropy += losses.entropy;
                stats.kl += losses.kl;
                stats.clip_fraction += losses.clip_fraction;
                stats.minibatch_steps += 1;
            }
        }
        let k = stats.minibatch_steps.max(1) as f64;
        stats.surrogate_loss /= k;
        stats.value_loss /= k;
        stats.entropy /= k;
        stats.kl /= k;
        stats.clip_fraction /= k;
        stats.lr = self.adam.lr();
        Ok(stats)
    }

    fn abort(&mut self, stats: &mut UpdateStats, why: &str) {
        let lr = (self.adam.lr() * 0.5).max(self.config.lr_min);
        log::warn!("ppo update aborted ({why}); learning rate halved to {lr:e}");
        self.adam.set_lr(lr);
        stats.aborted = true;
    }

    /// Losses on the first minibatch of a buffer without changing anything.
    pub fn probe(&self, buf: &RolloutBuffer, idx: &[usize]) -> Result<UpdateStats> {
        let mb = Minibatch::gather(buf, idx)?;
        let mut g = Graph::new(self.bundle.params());
        let l = minibatch_losses(&mut g, &self.bundle, &mb, &self.config)?;
        Ok(UpdateStats {
            surrogate_loss: l.surrogate,
            value_loss: l.value,
            entropy: l.entropy,
            kl: l.kl,
            clip_fraction: l.clip_fraction,
            lr: self.adam.lr(),
            minibatch_steps: 0,
            aborted: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_rule() {
        let c = PpoConfig::default();
        assert!((adaptive_lr(0.03, 1e-3, &c) - 1e-3 / 1.5).abs() < 1e-18);
        assert_eq!(adaptive_lr(0.01, 1e-3, &c), 1e-3);
        assert!((adaptive_lr(0.001, 1e-3, &c) - 1.5e-3).abs() < 1e-18);
        assert_eq!(adaptive_lr(0.001, 9e-3, &c), 1e-2);
        assert_eq!(adaptive_lr(1.0, 1.2e-5, &c), 1e-5);
        assert!((adaptive_lr(-0.5, 1e-3, &c) - 1.5e-3).abs() < 1e-18);
    }
}
