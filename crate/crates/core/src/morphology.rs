//! Morphology descriptors: the 11 physical parameters that identify a robot
//! embodiment, their training ranges, sampling and normalization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const MORPH_DIM: usize = 11;

/// Component order of every morphology vector.
pub const COMPONENT_NAMES: [&str; MORPH_DIM] = [
    "hip_mass",
    "thigh_mass",
    "calf_mass",
    "foot_mass",
    "base_mass",
    "hip_limit_min",
    "hip_limit_max",
    "thigh_limit_min",
    "thigh_limit_max",
    "calf_limit_min",
    "calf_limit_max",
];

pub mod index {
    pub const HIP_MASS: usize = 0;
    pub const THIGH_MASS: usize = 1;
    pub const CALF_MASS: usize = 2;
    pub const FOOT_MASS: usize = 3;
    pub const BASE_MASS: usize = 4;
    pub const HIP_MIN: usize = 5;
    pub const HIP_MAX: usize = 6;
    pub const THIGH_MIN: usize = 7;
    pub const THIGH_MAX: usize = 8;
    pub const CALF_MIN: usize = 9;
    pub const CALF_MAX: usize = 10;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Affine map sending `[lo, hi]` onto `[-1, 1]`, unclamped.
    /// A degenerate interval maps everything to 0.
    pub fn normalize(&self, x: f64) -> f64 {
        let width = self.hi - self.lo;
        if width == 0.0 {
            0.0
        } else {
            2.0 * (x - self.lo) / width - 1.0
        }
    }

    pub fn denormalize(&self, u: f64) -> f64 {
        self.lo + 0.5 * (u + 1.0) * (self.hi - self.lo)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }
}

/// Uniform sampling ranges per component, in [`COMPONENT_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphRanges {
    pub intervals: [Interval; MORPH_DIM],
}

impl Default for MorphRanges {
    /// Training ranges: masses in kg, joint limits in rad.
    fn default() -> Self {
        Self {
            intervals: [
                Interval::new(0.51, 0.70),
                Interval::new(0.63, 1.15),
                Interval::new(0.06, 0.17),
                Interval::new(0.00, 0.06),
                Interval::new(3.30, 6.92),
                Interval::new(-1.10, -0.80),
                Interval::new(0.80, 1.10),
                Interval::new(-1.65, -1.05),
                Interval::new(3.49, 4.05),
                Interval::new(-2.72, -2.60),
                Interval::new(-0.95, -0.78),
            ],
        }
    }
}

impl MorphRanges {
    pub fn validate(&self) -> Result<()> {
        for (iv, name) in self.intervals.iter().zip(COMPONENT_NAMES) {
            if !(iv.lo.is_finite() && iv.hi.is_finite()) || iv.lo > iv.hi {
                return Err(CoreError::Config(format!(
                    "range `{name}` is empty or non-finite: [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
        use index::*;
        for (lo, hi, joint) in [(HIP_MIN, HIP_MAX, "hip"), (THIGH_MIN, THIGH_MAX, "thigh"), (CALF_MIN, CALF_MAX, "calf")] {
            if self.intervals[lo].hi >= self.intervals[hi].lo {
                return Err(CoreError::Config(format!(
                    "{joint}: min-limit range must lie below max-limit range"
                )));
            }
        }
        Ok(())
    }

    pub fn midpoint(&self) -> [f64; MORPH_DIM] {
        std::array::from_fn(|i| self.intervals[i].midpoint())
    }

    pub fn normalize(&self, raw: &[f64; MORPH_DIM]) -> [f64; MORPH_DIM] {
        std::array::from_fn(|i| self.intervals[i].normalize(raw[i]))
    }

    pub fn contains(&self, raw: &[f64; MORPH_DIM]) -> bool {
        raw.iter().zip(&self.intervals).all(|(x, iv)| iv.contains(*x))
    }
}

/// A morphology descriptor together with its normalized form.
///
/// The normalized vector is what the networks see; it is always computed
/// against the training ranges, even for out-of-range evaluation targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphVector {
    pub raw: [f64; MORPH_DIM],
    pub normalized: [f64; MORPH_DIM],
}

impl MorphVector {
    pub fn from_raw(raw: [f64; MORPH_DIM], ranges: &MorphRanges) -> Self {
        Self {
            raw,
            normalized: ranges.normalize(&raw),
        }
    }

    pub fn from_slice(raw: &[f64], ranges: &MorphRanges) -> Result<Self> {
        let raw: [f64; MORPH_DIM] = raw.try_into().map_err(|_| CoreError::Dimension {
            what: "morphology vector",
            expected: MORPH_DIM,
            got: raw.len(),
        })?;
        Ok(Self::from_raw(raw, ranges))
    }

    pub fn get(&self, i: usize) -> f64 {
        self.raw[i]
    }

    /// Total mass of the robot: base plus four legs.
    pub fn total_mass(&self) -> f64 {
        use index::*;
        self.raw[BASE_MASS]
            + 4.0 * (self.raw[HIP_MASS] + self.raw[THIGH_MASS] + self.raw[CALF_MASS] + self.raw[FOOT_MASS])
    }
}

/// Draw every component independently and uniformly from its range.
pub fn sample_morphology(rng: &mut impl Rng, ranges: &MorphRanges) -> MorphVector {
    let raw = std::array::from_fn(|i| ranges.intervals[i].sample(rng));
    MorphVector::from_raw(raw, ranges)
}

pub fn normalize_morphology(raw: &[f64; MORPH_DIM], ranges: &MorphRanges) -> [f64; MORPH_DIM] {
    ranges.normalize(raw)
}
