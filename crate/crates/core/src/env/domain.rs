//! Periodic domain randomization: ground friction, base pushes, action
//! latency and observation noise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::morphology::Interval;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainRandConfig {
    pub enabled: bool,
    pub friction: Interval,
    pub push_interval_s: f64,
    /// Largest planar velocity change of a push, m/s.
    pub max_push_velocity: f64,
    /// Largest action lag in control steps.
    pub max_lag_steps: usize,
    pub rerandomize_interval_s: f64,
    /// Global multiplier on the per-channel sensor-noise amplitudes.
    pub noise_level: f64,
}

impl Default for DomainRandConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            friction: Interval::new(0.5, 1.25),
            push_interval_s: 15.0,
            max_push_velocity: 1.0,
            max_lag_steps: 6,
            rerandomize_interval_s: 10.0,
            noise_level: 1.0,
        }
    }
}

impl DomainRandConfig {
    /// No randomization at all: nominal friction, no pushes, lag or noise.
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            noise_level: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.friction;
        if !(f.lo > 0.0 && f.lo <= f.hi && f.hi.is_finite()) {
            return Err(CoreError::Config(format!("friction interval [{}, {}] is invalid", f.lo, f.hi)));
        }
        for (name, v) in [
            ("push_interval_s", self.push_interval_s),
            ("rerandomize_interval_s", self.rerandomize_interval_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CoreError::Config(format!("domain `{name}` must be positive, got {v}")));
            }
        }
        if !(self.max_push_velocity >= 0.0 && self.noise_level >= 0.0) {
            return Err(CoreError::Config("push velocity and noise level must be non-negative".into()));
        }
        Ok(())
    }

    fn period_steps(seconds: f64, control_dt: f64) -> u64 {
        ((seconds / control_dt).round() as u64).max(1)
    }
}

/// Something the randomizer did at a given control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainEvent {
    Friction(f64),
    Push(f64),
}

/// Per-environment randomization state for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainRandomizer {
    config: DomainRandConfig,
    push_every: u64,
    resample_every: u64,
    friction: f64,
    lag: usize,
}

impl DomainRandomizer {
    pub fn new(config: DomainRandConfig, control_dt: f64) -> Self {
        let push_every = DomainRandConfig::period_steps(config.push_interval_s, control_dt);
        let resample_every = DomainRandConfig::period_steps(config.rerandomize_interval_s, control_dt);
        let friction = config.friction.midpoint();
        Self {
            config,
            push_every,
            resample_every,
            friction,
            lag: 0,
        }
    }

    pub fn config(&self) -> &DomainRandConfig {
        &self.config
    }

    pub fn friction(&self) -> f64 {
        self.friction
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn sample_friction(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.config.friction.sample(rng)
    }

    /// New episode: fresh friction and a fresh lag.
    pub fn reset(&mut self, rng: &mut ChaCha8Rng) {
        if self.config.enabled {
            self.friction = self.sample_friction(rng);
            self.lag = rng.gen_range(0..=self.config.max_lag_steps);
        } else {
            self.friction = self.config.friction.midpoint();
            self.lag = 0;
        }
    }

    /// Events due once `step` control steps of the episode have elapsed.
    pub fn tick(&mut self, step: u64, rng: &mut ChaCha8Rng) -> Vec<DomainEvent> {
        let mut events = Vec::new();
        if !self.config.enabled || step == 0 {
            return events;
        }
        if step.is_multiple_of(self.resample_every) {
            self.friction = self.sample_friction(rng);
            events.push(DomainEvent::Friction(self.friction));
        }
        if step.is_multiple_of(self.push_every) && self.config.max_push_velocity > 0.0 {
            let p = self.config.max_push_velocity;
            events.push(DomainEvent::Push(rng.gen_range(-p..=p)));
        }
        events
    }

    /// Uniform noise of amplitude `noise_level * scales[i]` added in place.
    pub fn add_noise(&self, frame: &mut [f64], scales: &[f64], rng: &mut ChaCha8Rng) {
        let level = self.config.noise_level;
        if level == 0.0 {
            return;
        }
        for (x, &s) in frame.iter_mut().zip(scales) {
            if s > 0.0 {
                *x += level * s * rng.gen_range(-1.0..=1.0);
            }
        }
    }
}

/// Fixed-lag action pipeline: what goes in at step `t` comes out at
/// step `t + lag`. Before that, zeros come out.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDelay {
    slots: Vec<Vec<f64>>,
    head: usize,
}

impl ActionDelay {
    pub fn new(lag: usize, action_dim: usize) -> Self {
        Self {
            slots: vec![vec![0.0; action_dim]; lag + 1],
            head: 0,
        }
    }

    pub fn lag(&self) -> usize {
        self.slots.len() - 1
    }

    pub fn push(&mut self, action: &[f64]) -> &[f64] {
        self.slots[self.head].copy_from_slice(action);
        let n = self.slots.len();
        let out = (self.head + 1) % n;
        self.head = out;
        // the oldest slot is the one written `lag` steps ago
        &self.slots[out]
    }
}
