//! The collect / update training loop.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::buffer::{Collector, CommandSampler, MASS_BUCKETS};
use super::update::Learner;
use super::PpoConfig;
use crate::env::{CurriculumConfig, CurriculumState, Env, EnvConfig, EnvKind, MorphSource};
use crate::error::{CoreError, Result};
use crate::eval::{bucketed_explained_variance, explained_variance};
use crate::morphology::{MorphRanges, MorphVector};
use crate::nets::{NetDims, NetworkBundle, NetworkConfig, Variant};
use crate::reward::RewardWeights;
use crate::seed::derive_seed;
use crate::env::point_mass_reward;

pub const TRAIN_LOG_FILE: &str = "training_log.csv";

/// Forward-speed commands drawn at every reset. With the curriculum on,
/// the upper end is the current curriculum bound instead of `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandConfig {
    pub min: f64,
    pub max: f64,
    pub curriculum: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub reward: RewardWeights,
    pub ranges: MorphRanges,
    pub network: NetworkConfig,
    pub ppo: PpoConfig,
    pub commands: CommandConfig,
    pub curriculum: CurriculumConfig,
    /// Resample the morphology at every reset; otherwise train on the
    /// midpoint template only.
    pub randomize_morphology: bool,
    /// Write a checkpoint every this many iterations (0: final only).
    pub checkpoint_every: u64,
}

impl TrainConfig {
    pub fn point_mass() -> Self {
        Self {
            env: EnvConfig::point_mass(),
            reward: point_mass_reward(),
            ranges: MorphRanges::default(),
            network: NetworkConfig::default(),
            ppo: PpoConfig::default(),
            commands: CommandConfig {
                min: 0.5,
                max: 2.0,
                curriculum: false,
            },
            curriculum: CurriculumConfig::default(),
            randomize_morphology: true,
            checkpoint_every: 0,
        }
    }

    pub fn quad() -> Self {
        let curriculum = CurriculumConfig::default();
        Self {
            env: EnvConfig::default(),
            reward: RewardWeights::default(),
            ranges: MorphRanges::default(),
            network: NetworkConfig::default(),
            ppo: PpoConfig::default(),
            commands: CommandConfig {
                min: 0.0,
                max: curriculum.max_bound,
                curriculum: true,
            },
            curriculum,
            randomize_morphology: true,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.reward.validate()?;
        self.ranges.validate()?;
        self.ppo.validate()?;
        self.curriculum.validate()?;
        let c = &self.commands;
        if !(c.min.is_finite() && c.max.is_finite() && c.min <= c.max) {
            return Err(CoreError::Config(format!("commands: need finite min <= max, got [{}, {}]", c.min, c.max)));
        }
        Ok(())
    }

    pub fn dims(&self) -> NetDims {
        NetDims {
            obs_dim: self.env.obs_dim(),
            critic_dim: self.env.critic_dim(),
            action_dim: self.env.action_dim(),
        }
    }

    pub fn template(&self) -> MorphVector {
        MorphVector::from_raw(self.ranges.midpoint(), &self.ranges)
    }

    fn command_sampler(&self, bound: f64) -> CommandSampler {
        let max = if self.commands.curriculum {
            bound.min(self.commands.max)
        } else {
            self.commands.max
        };
        CommandSampler {
            min: self.commands.min.min(max),
            max,
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: u64,
    pub env_steps: u64,
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub lr: f64,
    pub clip_fraction: f64,
    pub mean_reward: f64,
    pub mean_tracking_error: f64,
    pub episodes: usize,
    pub falls: usize,
    pub faults: usize,
    pub curriculum_bound: f64,
    pub ev_all: Option<f64>,
    pub ev_light: Option<f64>,
    pub ev_mid: Option<f64>,
    pub ev_heavy: Option<f64>,
    pub aborted: bool,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub bundle: NetworkBundle,
    pub log: Vec<IterationLog>,
    pub curriculum_bound: f64,
    pub env_steps: u64,
}

fn make_envs(cfg: &TrainConfig, seed: u64) -> Result<Vec<Env>> {
    let source = if cfg.randomize_morphology {
        MorphSource::Sampled(cfg.ranges)
    } else {
        MorphSource::Fixed(cfg.template())
    };
    (0..cfg.ppo.num_envs)
        .map(|e| {
            Env::new(
                cfg.env.clone(),
                cfg.reward.clone(),
                cfg.ranges,
                source.clone(),
                derive_seed(seed, &format!("env{e}")),
            )
        })
        .collect()
}

fn write_checkpoint(bundle: &NetworkBundle, dir: &Path, name: &str, cfg: &TrainConfig, seed: u64) -> Result<()> {
    let path = dir.join(name);
    bundle
        .to_checkpoint()
        .with_meta("seed", seed.to_string())
        .with_meta("env", match cfg.env.kind {
            EnvKind::PointMass => "point_mass",
            EnvKind::Quad => "quad",
        })
        .save(&path)
        .map_err(|e| CoreError::file(&path, e))
}

/// Train `variant` from `seed`. With an output directory, the log is
/// written row by row to `training_log.csv` and checkpoints go under
/// `checkpoints/`, so a failed run keeps what it produced.
pub fn train(cfg: &TrainConfig, variant: Variant, seed: u64, out: Option<&Path>) -> Result<TrainResult> {
    cfg.validate()?;
    let bundle = NetworkBundle::new(variant, cfg.dims(), cfg.network.clone(), derive_seed(seed, "networks"))?;
    let mut learner = Learner::new(bundle, cfg.ppo.clone(), derive_seed(seed, "minibatches"))?;
    let mut curriculum = CurriculumState::new(cfg.curriculum.clone());
    let mut collector = Collector::new(
        make_envs(cfg, seed)?,
        derive_seed(seed, "policy"),
        cfg.command_sampler(curriculum.bound()),
    )?;

    let mut writer = match out {
        Some(dir) => {
            let ckpt_dir = dir.join("checkpoints");
            fs::create_dir_all(&ckpt_dir).map_err(|e| CoreError::file(&ckpt_dir, e))?;
            let path = dir.join(TRAIN_LOG_FILE);
            Some(csv::Writer::from_path(&path).map_err(|e| CoreError::file(&path, e))?)
        }
        None => None,
    };

    let mut log = Vec::new();
    let mut env_steps = 0;
    let iterations = cfg.ppo.iterations();
    for it in 0..iterations {
        let mut buf = collector.collect(learner.bundle(), cfg.ppo.horizon)?;
        env_steps += buf.len() as u64;
        buf.compute_advantages(cfg.ppo.gamma, cfg.ppo.lambda);

        let keep: Vec<usize> = (0..buf.len()).filter(|&i| !buf.faults[i]).collect();
        let returns = buf.returns.as_ref().expect("returns set by GAE");
        let g: Vec<f64> = keep.iter().map(|&i| returns[i]).collect();
        let v: Vec<f64> = keep.iter().map(|&i| buf.values[i]).collect();
        let b: Vec<usize> = keep.iter().map(|&i| buf.buckets[i]).collect();
        let ev_all = explained_variance(&g, &v);
        let ev = bucketed_explained_variance(&g, &v, &b, MASS_BUCKETS.len());

        let stats = learner.update(&buf)?;

        if cfg.commands.curriculum {
            for ep in buf.episodes.iter().filter(|e| !e.fault) {
                if curriculum.update(ep.tracking_score) {
                    collector.set_command_max(cfg.command_sampler(curriculum.bound()).max);
                }
            }
        }

        let row = IterationLog {
            iteration: it,
            env_steps,
            surrogate_loss: stats.surrogate_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            kl: stats.kl,
            lr: stats.lr,
            clip_fraction: stats.clip_fraction,
            mean_reward: buf.mean_reward(),
            mean_tracking_error: buf.mean_tracking_error(),
            episodes: buf.episodes.len(),
            falls: buf.episodes.iter().filter(|e| e.fell).count(),
            faults: buf.episodes.iter().filter(|e| e.fault).count(),
            curriculum_bound: curriculum.bound(),
            ev_all,
            ev_light: ev[0],
            ev_mid: ev[1],
            ev_heavy: ev[2],
            aborted: stats.aborted,
        };
        log::info!(
            "{variant} seed {seed} iter {it}/{iterations}: reward {:.4} err {:.4} bound {:.2} lr {:.2e}",
            row.mean_reward,
            row.mean_tracking_error,
            row.curriculum_bound,
            row.lr
        );
        if let (Some(w), Some(dir)) = (writer.as_mut(), out) {
            let path = dir.join(TRAIN_LOG_FILE);
            w.serialize(&row).map_err(|e| CoreError::file(&path, e))?;
            w.flush().map_err(|e| CoreError::file(&path, e))?;
            if cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 {
                write_checkpoint(learner.bundle(), &dir.join("checkpoints"), &format!("iter_{:05}.ckpt", it + 1), cfg, seed)?;
            }
        }
        log.push(row);
    }
    if let Some(dir) = out {
        write_checkpoint(learner.bundle(), dir, "final.ckpt", cfg, seed)?;
    }
    Ok(TrainResult {
        bundle: learner.into_bundle(),
        log,
        curriculum_bound: curriculum.bound(),
        env_steps,
    })
}
