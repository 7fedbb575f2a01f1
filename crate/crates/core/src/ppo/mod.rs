//! PPO with GAE, a clipped value loss and a KL-adaptive learning rate.

mod buffer;
mod gae;
mod train;
mod update;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub use buffer::{mass_bucket, Collector, CommandSampler, RolloutBuffer, MASS_BUCKETS};
pub use gae::gae_sequence;
pub use train::{train, CommandConfig, IterationLog, TrainConfig, TrainResult, TRAIN_LOG_FILE};
pub use update::{adaptive_lr, clipped_surrogate, Learner, Minibatch, UpdateStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub clip_value_loss: bool,
    pub learning_rate: f64,
    pub adaptive_lr: bool,
    pub kl_target: f64,
    pub lr_min: f64,
    pub lr_max: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub max_grad_norm: f64,
    pub num_envs: usize,
    pub horizon: usize,
    pub total_steps: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            entropy_coef: 0.01,
            value_coef: 1.0,
            clip_value_loss: true,
            learning_rate: 1e-3,
            adaptive_lr: true,
            kl_target: 0.01,
            lr_min: 1e-5,
            lr_max: 1e-2,
            epochs: 5,
            minibatches: 4,
            max_grad_norm: 1.0,
            num_envs: 64,
            horizon: 48,
            total_steps: 200_000,
        }
    }
}

impl PpoConfig {
    pub fn steps_per_iteration(&self) -> u64 {
        (self.num_envs * self.horizon) as u64
    }

    pub fn iterations(&self) -> u64 {
        self.total_steps.div_ceil(self.steps_per_iteration())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::Config(m));
        for (name, x) in [("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(x > 0.0 && x <= 1.0) {
                return bad(format!("ppo.{name} must lie in (0, 1], got {x}"));
            }
        }
        if !(self.clip > 0.0) {
            return bad(format!("ppo.clip must be positive, got {}", self.clip));
        }
        if self.epochs == 0 || self.minibatches == 0 || self.num_envs == 0 || self.horizon == 0 {
            return bad("ppo.epochs, minibatches, num_envs and horizon must be at least 1".into());
        }
        if self.num_envs * self.horizon < self.minibatches {
            return bad("ppo: fewer samples per rollout than minibatches".into());
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.learning_rate && self.learning_rate <= self.lr_max) {
            return bad("ppo: need 0 < lr_min <= learning_rate <= lr_max".into());
        }
        for (name, x) in [
            ("entropy_coef", self.entropy_coef),
            ("value_coef", self.value_coef),
            ("kl_target", self.kl_target),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                return bad(format!("ppo.{name} must be finite and non-negative, got {x}"));
            }
        }
        Ok(())
    }
}
