//! Rollout storage and collection.

use morphcritic_autodiff::{Graph, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use super::gae::gae_sequence;
use crate::env::{EpisodeSummary, Env};
use crate::error::{CoreError, Result};
use crate::morphology::{index, MorphVector, MORPH_DIM};
use crate::nets::{graph_log_prob, NetworkBundle};

pub const MASS_BUCKETS: [&str; 3] = ["light", "mid", "heavy"];

/// Bucket of a morphology by the tercile of its normalized base mass.
pub fn mass_bucket(m: &MorphVector) -> usize {
    let b = m.normalized[index::BASE_MASS];
    if b < -1.0 / 3.0 {
        0
    } else if b < 1.0 / 3.0 {
        1
    } else {
        2
    }
}

/// Uniform forward-speed commands on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandSampler {
    pub min: f64,
    pub max: f64,
}

impl CommandSampler {
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.max > self.min {
            rng.gen_range(self.min..=self.max)
        } else {
            self.min
        }
    }
}

/// Samples stored time-major: sample `t * num_envs + e` is step `t` of env `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub horizon: usize,
    pub obs_dim: usize,
    pub critic_dim: usize,
    pub action_dim: usize,
    pub obs: Vec<f64>,
    pub critic: Vec<f64>,
    /// Normalized morphology descriptors.
    pub morph: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Critic value of the state after a time-limited ending, else 0.
    pub bootstrap: Vec<f64>,
    /// Step ended in a simulator fault; excluded from metrics.
    pub faults: Vec<bool>,
    pub buckets: Vec<usize>,
    pub tracking_errors: Vec<f64>,
    /// Critic values after the last step, one per env.
    pub last_values: Vec<f64>,
    pub advantages: Option<Vec<f64>>,
    pub returns: Option<Vec<f64>>,
    pub episodes: Vec<EpisodeSummary>,
}

impl RolloutBuffer {
    fn new(num_envs: usize, horizon: usize, obs_dim: usize, critic_dim: usize, action_dim: usize) -> Self {
        let n = num_envs * horizon;
        Self {
            num_envs,
            horizon,
            obs_dim,
            critic_dim,
            action_dim,
            obs: Vec::with_capacity(n * obs_dim),
            critic: Vec::with_capacity(n * critic_dim),
            morph: Vec::with_capacity(n * MORPH_DIM),
            actions: Vec::with_capacity(n * action_dim),
            log_probs: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            bootstrap: Vec::with_capacity(n),
            faults: Vec::with_capacity(n),
            buckets: Vec::with_capacity(n),
            tracking_errors: Vec::with_capacity(n),
            last_values: Vec::new(),
            advantages: None,
            returns: None,
            episodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Run GAE independently down each env's column.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) {
        let (n, h) = (self.num_envs, self.horizon);
        let mut adv = vec![0.0; n * h];
        let mut ret = vec![0.0; n * h];
        for e in 0..n {
            let col = |v: &[f64]| (0..h).map(|t| v[t * n + e]).collect::<Vec<_>>();
            let dones: Vec<bool> = (0..h).map(|t| self.dones[t * n + e]).collect();
            let (a, g) = gae_sequence(
                &col(&self.rewards),
                &col(&self.values),
                &dones,
                &col(&self.bootstrap),
                self.last_values[e],
                gamma,
                lambda,
            );
            for t in 0..h {
                adv[t * n + e] = a[t];
                ret[t * n + e] = g[t];
            }
        }
        self.advantages = Some(adv);
        self.returns = Some(ret);
    }

    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.len().max(1) as f64
    }

    /// Mean absolute speed-tracking error over non-faulted steps.
    pub fn mean_tracking_error(&self) -> f64 {
        let (s, c) = self
            .tracking_errors
            .iter()
            .zip(&self.faults)
            .filter(|(_, &f)| !f)
            .fold((0.0, 0usize), |(s, c), (e, _)| (s + e, c + 1));
        if c == 0 {
            0.0
        } else {
            s / c as f64
        }
    }
}

/// A set of environments stepped in lockstep by one policy.
#[derive(Debug, Clone)]
pub struct Collector {
    envs: Vec<Env>,
    rng: ChaCha8Rng,
    commands: CommandSampler,
}

impl Collector {
    /// Resets every env. The first episode of each env gets a random time
    /// limit so that the batch does not time out in lockstep.
    pub fn new(mut envs: Vec<Env>, seed: u64, commands: CommandSampler) -> Result<Self> {
        if envs.is_empty() {
            return Err(CoreError::Config("collector needs at least one environment".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for env in &mut envs {
            env.reset(commands.sample(&mut rng))?;
            let max = env.config().max_steps();
            env.truncate_episode(rng.gen_range(1..=max));
        }
        Ok(Self { envs, rng, commands })
    }

    pub fn envs(&self) -> &[Env] {
        &self.envs
    }

    pub fn commands(&self) -> CommandSampler {
        self.commands
    }

    /// Applies to episodes started from now on.
    pub fn set_command_max(&mut self, max: f64) {
        self.commands.max = max;
    }

    fn batch_inputs(&self) -> Result<(Tensor, Tensor, Tensor)> {
        let n = self.envs.len();
        let mut obs = Vec::new();
        let mut critic = Vec::new();
        let mut morph = Vec::with_capacity(n * MORPH_DIM);
        for env in &self.envs {
            obs.extend_from_slice(env.obs());
            env.write_critic_input(&mut critic);
            morph.extend_from_slice(&env.morphology().normalized);
        }
        let od = obs.len() / n;
        let cd = critic.len() / n;
        Ok((
            Tensor::new(vec![n, od], obs)?,
            Tensor::new(vec![n, cd], critic)?,
            Tensor::new(vec![n, MORPH_DIM], morph)?,
        ))
    }

    /// Step every env `horizon` times with actions sampled from the policy.
    /// Finished episodes restart with a fresh command (and, for sampled
    /// morphologies, a fresh morphology).
    pub fn collect(&mut self, bundle: &NetworkBundle, horizon: usize) -> Result<RolloutBuffer> {
        let n = self.envs.len();
        let dims = bundle.dims();
        let mut buf = RolloutBuffer::new(n, horizon, dims.obs_dim, dims.critic_dim, dims.action_dim);
        let mut to_bootstrap = Vec::new();
        for _ in 0..horizon {
            let (obs, critic, morph) = self.batch_inputs()?;
            let mut g = Graph::new(bundle.params());
            let o = g.input(obs.clone());
            let x = g.input(critic.clone());
            let m = g.input(morph.clone());
            let out = bundle.forward(&mut g, o, x, Some(m))?;
            let std: Vec<f64> = g.value(out.log_std).data().iter().map(|l| l.exp()).collect();
            let mean = g.value(out.mean).data();
            let mut actions = Vec::with_capacity(n * dims.action_dim);
            for i in 0..n {
                for j in 0..dims.action_dim {
                    let eps: f64 = self.rng.sample(StandardNormal);
                    actions.push(mean[i * dims.action_dim + j] + std[j] * eps);
                }
            }
            let a = g.input(Tensor::new(vec![n, dims.action_dim], actions.clone())?);
            let lp = graph_log_prob(&mut g, out.mean, out.log_std, a)?;
            buf.log_probs.extend_from_slice(g.value(lp).data());
            buf.values.extend_from_slice(g.value(out.value).data());
            buf.obs.extend_from_slice(obs.data());
            buf.critic.extend_from_slice(critic.data());
            buf.morph.extend_from_slice(morph.data());
            buf.actions.extend_from_slice(&actions);

            to_bootstrap.clear();
            let first = buf.bootstrap.len();
            for (e, env) in self.envs.iter_mut().enumerate() {
                buf.buckets.push(mass_bucket(env.morphology()));
                let step = env.step(&actions[e * dims.action_dim..(e + 1) * dims.action_dim])?;
                buf.rewards.push(step.reward);
                buf.dones.push(step.done);
                buf.faults.push(step.fault);
                buf.tracking_errors.push(step.tracking_error);
                buf.bootstrap.push(0.0);
                if step.timeout {
                    to_bootstrap.push(e);
                }
                if let Some(ep) = step.episode {
                    buf.episodes.push(ep);
                }
            }
            if !to_bootstrap.is_empty() {
                let mut xs = Vec::new();
                let mut ms = Vec::new();
                for &e in &to_bootstrap {
                    self.envs[e].write_critic_input(&mut xs);
                    ms.extend_from_slice(&self.envs[e].morphology().normalized);
                }
                let k = to_bootstrap.len();
                let vals = bundle.values(
                    &Tensor::new(vec![k, dims.critic_dim], xs)?,
                    Some(&Tensor::new(vec![k, MORPH_DIM], ms)?),
                )?;
                for (&e, v) in to_bootstrap.iter().zip(vals) {
                    buf.bootstrap[first + e] = v;
                }
            }
            for e in 0..n {
                if buf.dones[first + e] {
                    let cmd = self.commands.sample(&mut self.rng);
                    self.envs[e].reset(cmd)?;
                }
            }
        }
        let (_, critic, morph) = self.batch_inputs()?;
        buf.last_values = bundle.values(&critic, Some(&morph))?;
        Ok(buf)
    }
}
