//! One-dimensional point-mass velocity tracker.
//!
//! The morphology enters only through three derived quantities:
//! total mass `M = base + 4·(hip + thigh + calf + foot)`, force limit
//! `u_max = κ_u·4·(thigh + calf)` and linear drag
//! `c = c_0·(thigh_max − thigh_min)`.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::morphology::{index, MorphVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointMassConfig {
    /// Force limit per kg of leg actuator mass, N/kg.
    pub force_per_kg: f64,
    /// Drag per radian of thigh range, N·s/(m·rad).
    pub drag_per_rad: f64,
    /// Commanded force per unit action, N.
    pub action_scale: f64,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            force_per_kg: 15.0,
            drag_per_rad: 1.0,
            action_scale: 40.0,
        }
    }
}

impl PointMassConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.force_per_kg > 0.0 && self.drag_per_rad >= 0.0 && self.action_scale > 0.0) {
            return Err(CoreError::Config("point-mass constants must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMassParams {
    pub mass: f64,
    pub u_max: f64,
    pub drag: f64,
}

impl PointMassParams {
    pub fn from_morphology(m: &MorphVector, cfg: &PointMassConfig) -> Self {
        use index::*;
        Self {
            mass: m.total_mass(),
            u_max: cfg.force_per_kg * 4.0 * (m.get(THIGH_MASS) + m.get(CALF_MASS)),
            drag: cfg.drag_per_rad * (m.get(THIGH_MAX) - m.get(THIGH_MIN)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointMassState {
    pub x: f64,
    pub v: f64,
}

/// One semi-implicit Euler step under force `u`, clipped to `±u_max`.
/// Returns the applied force.
pub fn pm_step(state: &mut PointMassState, u: f64, p: &PointMassParams, dt: f64) -> f64 {
    let applied = u.clamp(-p.u_max, p.u_max);
    state.v += dt * (applied - p.drag * state.v) / p.mass;
    state.x += dt * state.v;
    applied
}
