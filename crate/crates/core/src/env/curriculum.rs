//! Threshold command curriculum shared by every variant.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    /// Command bound at the start of training, m/s.
    pub initial_bound: f64,
    pub max_bound: f64,
    pub increment: f64,
    /// Promotion when the trailing mean score exceeds this fraction of
    /// `max_score`.
    pub threshold_fraction: f64,
    /// Best attainable episode tracking score.
    pub max_score: f64,
    /// Number of recent episodes in the trailing mean.
    pub window: usize,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            initial_bound: 0.5,
            max_bound: 2.5,
            increment: 0.25,
            threshold_fraction: 0.8,
            max_score: 4.0,
            window: 32,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_bound >= 0.0 && self.initial_bound <= self.max_bound && self.increment >= 0.0) {
            return Err(CoreError::Config("curriculum bounds must satisfy 0 <= initial <= max".into()));
        }
        if self.window == 0 || !(self.max_score > 0.0) {
            return Err(CoreError::Config("curriculum window and max_score must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumState {
    config: CurriculumConfig,
    bound: f64,
    recent: VecDeque<f64>,
}

impl CurriculumState {
    pub fn new(config: CurriculumConfig) -> Self {
        Self {
            bound: config.initial_bound,
            recent: VecDeque::with_capacity(config.window),
            config,
        }
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn trailing_mean(&self) -> Option<f64> {
        (!self.recent.is_empty()).then(|| self.recent.iter().sum::<f64>() / self.recent.len() as f64)
    }

    /// Record one finished episode's tracking score; returns true on
    /// promotion. The score history restarts after each promotion so the
    /// next step is judged on the new difficulty only.
    pub fn update(&mut self, score: f64) -> bool {
        if !score.is_finite() {
            return false;
        }
        if self.recent.len() == self.config.window {
            self.recent.pop_front();
        }
        self.recent.push_back(score);
        let full = self.recent.len() == self.config.window;
        let mean = self.trailing_mean().unwrap_or(0.0);
        let threshold = self.config.threshold_fraction * self.config.max_score;
        if full && mean > threshold && self.bound < self.config.max_bound {
            self.bound = (self.bound + self.config.increment).min(self.config.max_bound);
            self.recent.clear();
            return true;
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> CurriculumConfig {
        CurriculumConfig {
            initial_bound: 0.5,
            max_bound: 1.0,
            increment: 0.25,
            window: 2,
            ..CurriculumConfig::default()
        }
    }

    #[test]
    fn below_threshold_keeps_bound() {
        let mut c = CurriculumState::new(cfg());
        for _ in 0..10 {
            assert!(!c.update(3.0));
        }
        assert_eq!(c.bound(), 0.5);
    }

    #[test]
    fn replayed_scores_give_fixed_trajectory() {
        let scores = [3.5, 3.3, 2.0, 3.9, 3.9, 3.9, 3.9, 4.0, 4.0];
        let run = || {
            let mut c = CurriculumState::new(cfg());
            scores.iter().map(|&s| (c.update(s), c.bound())).collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a, run());
        let bounds: Vec<f64> = a.iter().map(|x| x.1).collect();
        assert_eq!(bounds, vec![0.5, 0.75, 0.75, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn ceiling_is_sticky() {
        let mut c = CurriculumState::new(CurriculumConfig {
            initial_bound: 1.0,
            ..cfg()
        });
        for _ in 0..10 {
            assert!(!c.update(4.0));
        }
        assert_eq!(c.bound(), 1.0);
    }
}
