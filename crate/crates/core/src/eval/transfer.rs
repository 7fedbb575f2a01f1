//! Zero-shot evaluation of a frozen policy on held-out morphologies.

use morphcritic_autodiff::{Checkpoint, Tensor};
use serde::{Deserialize, Serialize};

use super::metrics::{advantage_noise, explained_variance, morph_distance, stable_speed_metrics};
use crate::env::{DomainRandConfig, Env, MorphSource, TargetSet};
use crate::error::{CoreError, Result};
use crate::morphology::MORPH_DIM;
use crate::nets::{NetworkBundle, Variant};
use crate::ppo::TrainConfig;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub commands: Vec<f64>,
    pub seeds: Vec<u64>,
    pub window_s: f64,
    /// Keep the training domain randomization during evaluation.
    pub domain_randomization: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            commands: vec![1.0, 2.0, 2.5],
            seeds: vec![0, 1, 2, 3, 4],
            window_s: 3.0,
            domain_randomization: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.commands.is_empty() || self.seeds.is_empty() {
            return Err(CoreError::Config("eval: commands and seeds must be nonempty".into()));
        }
        if !(self.window_s > 0.0) {
            return Err(CoreError::Config("eval.window_s must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub target: String,
    pub seed: u64,
    pub command: f64,
    pub v_bar: f64,
    pub t_win: f64,
    pub t_max: f64,
    pub fell: bool,
    pub fault: bool,
    pub steps: u64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub name: String,
    pub distance: f64,
    pub v_bar_mean: f64,
    pub v_bar_std: f64,
    pub t_win_mean: f64,
    pub t_max_mean: f64,
    pub t_max_std: f64,
    pub explained_variance: Option<f64>,
    /// Bucketed advantage spread; our own diagnostic, see `advantage_noise`.
    pub advantage_noise: Option<f64>,
    pub falls: usize,
    pub episodes: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub target: String,
    pub t: f64,
    pub reward: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub variant: Variant,
    /// Sorted by distance from the training template.
    pub targets: Vec<TargetReport>,
    /// Per-step reward and critic value of the first episode per target.
    pub traces: Vec<TraceRow>,
}

impl TransferReport {
    pub fn target(&self, name: &str) -> Option<&TargetReport> {
        self.targets.iter().find(|t| t.name == name)
    }
}

/// Rebuild a policy from a checkpoint, rejecting a variant or
/// dimension mismatch.
pub fn load_policy(ckpt: &Checkpoint, expected: Option<Variant>, cfg: &TrainConfig) -> Result<NetworkBundle> {
    let bundle = NetworkBundle::from_checkpoint(ckpt)?;
    if let Some(v) = expected {
        if bundle.variant() != v {
            return Err(CoreError::CheckpointMismatch(format!(
                "checkpoint holds {}, expected {v}",
                bundle.variant()
            )));
        }
    }
    if bundle.dims() != cfg.dims() {
        return Err(CoreError::CheckpointMismatch(format!(
            "checkpoint dimensions {:?} do not match the environment {:?}",
            bundle.dims(),
            cfg.dims()
        )));
    }
    Ok(bundle)
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len().max(1) as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

struct Running {
    env: Env,
    seed: u64,
    command: f64,
    speeds: Vec<f64>,
    fallen: Vec<bool>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    bootstrap: f64,
    fell: bool,
    fault: bool,
    done: bool,
}

fn discounted_returns(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = bootstrap;
    for t in (0..rewards.len()).rev() {
        g = rewards[t] + gamma * g;
        out[t] = g;
    }
    out
}

/// Run the mean action of `bundle` on every target, seed and command.
/// Episodes of one target run in lockstep so the networks are evaluated in
/// batches.
pub fn zero_shot_eval(
    bundle: &NetworkBundle,
    train_cfg: &TrainConfig,
    targets: &TargetSet,
    cfg: &EvalConfig,
) -> Result<TransferReport> {
    cfg.validate()?;
    targets.validate(&train_cfg.ranges)?;
    if bundle.dims() != train_cfg.dims() {
        return Err(CoreError::CheckpointMismatch("policy dimensions do not match the environment".into()));
    }
    let template = train_cfg.template();
    let mut env_cfg = train_cfg.env.clone();
    if !cfg.domain_randomization {
        env_cfg.domain = DomainRandConfig::disabled();
    }
    let dt = env_cfg.control_dt();
    let gamma = train_cfg.ppo.gamma;
    let dims = bundle.dims();

    let mut reports = Vec::new();
    let mut traces = Vec::new();
    let mut all_adv = Vec::new();
    let mut all_bucket = Vec::new();
    for (ti, target) in targets.targets.iter().enumerate() {
        let m = target.vector(&train_cfg.ranges)?;
        let mut runs = Vec::new();
        for &seed in &cfg.seeds {
            for (ci, &command) in cfg.commands.iter().enumerate() {
                let s = derive_seed(seed, &format!("eval/{}/{ci}", target.name));
                let mut env = Env::new(env_cfg.clone(), train_cfg.reward.clone(), train_cfg.ranges, MorphSource::Fixed(m), s)?;
                env.reset(command)?;
                runs.push(Running {
                    env,
                    seed,
                    command,
                    speeds: Vec::new(),
                    fallen: Vec::new(),
                    rewards: Vec::new(),
                    values: Vec::new(),
                    bootstrap: 0.0,
                    fell: false,
                    fault: false,
                    done: false,
                });
            }
        }
        let morph = Tensor::new(vec![1, MORPH_DIM], m.normalized.to_vec())?;
        while runs.iter().any(|r| !r.done) {
            let live: Vec<usize> = (0..runs.len()).filter(|&i| !runs[i].done).collect();
            let k = live.len();
            let mut obs = Vec::with_capacity(k * dims.obs_dim);
            let mut xs = Vec::with_capacity(k * dims.critic_dim);
            for &i in &live {
                obs.extend_from_slice(runs[i].env.obs());
                runs[i].env.write_critic_input(&mut xs);
            }
            let morphs = Tensor::new(vec![k, MORPH_DIM], morph.data().repeat(k))?;
            let out = bundle.evaluate(
                &Tensor::new(vec![k, dims.obs_dim], obs)?,
                &Tensor::new(vec![k, dims.critic_dim], xs)?,
                Some(&morphs),
            )?;
            let mut timed_out = Vec::new();
            for (row, &i) in live.iter().enumerate() {
                let r = &mut runs[i];
                let step = r.env.step(out.mean.row_slice(row))?;
                r.values.push(out.value[row]);
                r.rewards.push(step.reward);
                r.speeds.push(step.forward_speed);
                r.fallen.push(step.fell || step.fault);
                if step.done {
                    r.done = true;
                    r.fell = step.fell;
                    r.fault = step.fault;
                    if step.timeout {
                        timed_out.push(i);
                    }
                }
            }
            if !timed_out.is_empty() {
                let mut xs = Vec::new();
                for &i in &timed_out {
                    runs[i].env.write_critic_input(&mut xs);
                }
                let n = timed_out.len();
                let v = bundle.values(
                    &Tensor::new(vec![n, dims.critic_dim], xs)?,
                    Some(&Tensor::new(vec![n, MORPH_DIM], morph.data().repeat(n))?),
                )?;
                for (&i, v) in timed_out.iter().zip(v) {
                    runs[i].bootstrap = v;
                }
            }
        }

        let mut episodes = Vec::new();
        let mut g_all = Vec::new();
        let mut v_all = Vec::new();
        for (ri, r) in runs.iter().enumerate() {
            let sm = stable_speed_metrics(&r.speeds, &r.fallen, dt, cfg.window_s);
            if !r.fault {
                let g = discounted_returns(&r.rewards, r.bootstrap, gamma);
                for (gt, vt) in g.iter().zip(&r.values) {
                    all_adv.push(gt - vt);
                    all_bucket.push(ti);
                }
                g_all.extend(g);
                v_all.extend_from_slice(&r.values);
            }
            if ri == 0 {
                for (t, (rw, v)) in r.rewards.iter().zip(&r.values).enumerate() {
                    traces.push(TraceRow {
                        target: target.name.clone(),
                        t: t as f64 * dt,
                        reward: *rw,
                        value: *v,
                    });
                }
            }
            episodes.push(EpisodeRecord {
                target: target.name.clone(),
                seed: r.seed,
                command: r.command,
                v_bar: sm.v_bar,
                t_win: sm.t_win,
                t_max: sm.t_max,
                fell: r.fell,
                fault: r.fault,
                steps: r.rewards.len() as u64,
                mean_reward: r.rewards.iter().sum::<f64>() / r.rewards.len().max(1) as f64,
            });
        }
        let v_bars: Vec<f64> = episodes.iter().map(|e| e.v_bar).collect();
        let t_wins: Vec<f64> = episodes.iter().map(|e| e.t_win).collect();
        let t_maxs: Vec<f64> = episodes.iter().map(|e| e.t_max).collect();
        let (v_bar_mean, v_bar_std) = mean_std(&v_bars);
        let (t_max_mean, t_max_std) = mean_std(&t_maxs);
        reports.push(TargetReport {
            name: target.name.clone(),
            distance: morph_distance(&m.normalized, &template.normalized),
            v_bar_mean,
            v_bar_std,
            t_win_mean: mean_std(&t_wins).0,
            t_max_mean,
            t_max_std,
            explained_variance: explained_variance(&g_all, &v_all),
            advantage_noise: None,
            falls: episodes.iter().filter(|e| e.fell).count(),
            episodes,
        });
    }
    let noise = advantage_noise(&all_adv, &all_bucket, reports.len());
    for (r, n) in reports.iter_mut().zip(noise) {
        r.advantage_noise = n;
    }
    reports.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    Ok(TransferReport {
        variant: bundle.variant(),
        targets: reports,
        traces,
    })
}
