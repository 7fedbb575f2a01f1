//! Named evaluation morphologies.
//!
//! The first entry is the training template (the midpoint of the default
//! ranges). The others scale segment masses after the mass ratios of
//! well-known quadrupeds and shift the joint limits; they are toy targets
//! for transfer trends, not measured robot data.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::morphology::{MorphRanges, MorphVector, MORPH_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetMorphology {
    pub name: String,
    /// Raw descriptor in the usual component order.
    pub raw: Vec<f64>,
}

impl TargetMorphology {
    pub fn vector(&self, ranges: &MorphRanges) -> Result<MorphVector> {
        if self.raw.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::Config(format!("target `{}` has a non-finite component", self.name)));
        }
        MorphVector::from_slice(&self.raw, ranges)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSet {
    pub targets: Vec<TargetMorphology>,
}

impl TargetSet {
    pub fn validate(&self, ranges: &MorphRanges) -> Result<()> {
        if self.targets.is_empty() {
            return Err(CoreError::Config("target list is empty".into()));
        }
        for t in &self.targets {
            if t.raw.len() != MORPH_DIM {
                return Err(CoreError::Config(format!(
                    "target `{}` has {} components, expected {MORPH_DIM}",
                    t.name,
                    t.raw.len()
                )));
            }
            t.vector(ranges)?;
        }
        Ok(())
    }
}

fn target(name: &str, raw: [f64; MORPH_DIM]) -> TargetMorphology {
    TargetMorphology {
        name: name.to_string(),
        raw: raw.to_vec(),
    }
}

impl Default for TargetSet {
    fn default() -> Self {
        let template = MorphRanges::default().midpoint();
        Self {
            targets: vec![
                target("go2_like", template),
                target("go1_like", [0.58, 0.80, 0.10, 0.03, 4.60, -0.86, 0.86, -1.20, 3.60, -2.70, -0.90]),
                target("a1_like", [0.66, 1.00, 0.16, 0.05, 4.80, -0.80, 0.80, -1.05, 4.00, -2.70, -0.92]),
                target("cheetah_like", [0.48, 0.60, 0.06, 0.00, 3.20, -1.10, 1.10, -1.70, 3.50, -2.75, -0.80]),
                target("aliengo_like", [0.78, 1.30, 0.18, 0.06, 7.50, -1.20, 1.20, -1.10, 4.10, -2.78, -0.95]),
                target("anymal_like", [0.95, 1.60, 0.24, 0.07, 9.00, -0.72, 0.72, -0.95, 4.20, -2.80, -1.00]),
                target("b1_like", [1.10, 1.90, 0.28, 0.08, 10.00, -0.70, 0.70, -0.90, 4.30, -2.85, -1.05]),
            ],
        }
    }
}
