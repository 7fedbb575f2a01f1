//! Locomotion reward terms and their signed weighted sum.
//!
//! Every term is a pure function. The environment fills a [`RewardInputs`]
//! snapshot each control step and [`evaluate`] turns it into a
//! [`RewardBreakdown`]:
//!
//! `total = Σ_task w·r − Σ_penalty w·p + Σ_stability w·s`
//!
//! Weights are used as given, so a negative weight on a task term (for
//! example the Raibert foot-placement error) makes it act as a penalty.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Task,
    Penalty,
    Stability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Lin,
    Yaw,
    Vz,
    Omega,
    Ori,
    Torque,
    JointAcc,
    ActionRate,
    Collision,
    JointLimit,
    Upright,
    Cop,
    Width,
    GaitForce,
    GaitVel,
    Slip,
    Impact,
    FootForce,
    Pose,
    JointVel,
    Jump,
    Raibert,
}

impl Term {
    pub const ALL: [Term; 22] = [
        Term::Lin,
        Term::Yaw,
        Term::Vz,
        Term::Omega,
        Term::Ori,
        Term::Torque,
        Term::JointAcc,
        Term::ActionRate,
        Term::Collision,
        Term::JointLimit,
        Term::Upright,
        Term::Cop,
        Term::Width,
        Term::GaitForce,
        Term::GaitVel,
        Term::Slip,
        Term::Impact,
        Term::FootForce,
        Term::Pose,
        Term::JointVel,
        Term::Jump,
        Term::Raibert,
    ];

    pub fn category(self) -> Category {
        use Term::*;
        match self {
            Lin | Yaw | GaitForce | GaitVel | Jump | Raibert => Category::Task,
            Upright | Cop | Width => Category::Stability,
            Vz | Omega | Ori | Torque | JointAcc | ActionRate | Collision | JointLimit | Slip | Impact
            | FootForce | Pose | JointVel => Category::Penalty,
        }
    }

    /// Column name used in logs and trajectory dumps.
    pub fn name(self) -> &'static str {
        use Term::*;
        match self {
            Lin => "r_lin",
            Yaw => "r_yaw",
            Vz => "p_vz",
            Omega => "p_omega",
            Ori => "p_ori",
            Torque => "p_tau",
            JointAcc => "p_qdd",
            ActionRate => "p_da",
            Collision => "p_coll",
            JointLimit => "p_jl",
            Upright => "s_upright",
            Cop => "s_cop",
            Width => "s_width",
            GaitForce => "r_gait_f",
            GaitVel => "r_gait_v",
            Slip => "p_slip",
            Impact => "p_impact",
            FootForce => "p_f",
            Pose => "p_q",
            JointVel => "p_qd",
            Jump => "r_jump",
            Raibert => "r_raibert",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Per-term weights and shaping constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub w_lin: f64,
    pub w_yaw: f64,
    pub w_vz: f64,
    pub w_omega: f64,
    pub w_ori: f64,
    pub w_tau: f64,
    pub w_qdd: f64,
    pub w_da: f64,
    pub w_coll: f64,
    pub w_jl: f64,
    pub w_upright: f64,
    pub w_cop: f64,
    pub w_width: f64,
    pub w_gait_f: f64,
    pub w_gait_v: f64,
    pub w_slip: f64,
    pub w_impact: f64,
    pub w_f: f64,
    pub w_q: f64,
    pub w_qd: f64,
    pub w_jump: f64,
    pub w_raibert: f64,
    pub sigma_lin: f64,
    pub sigma_yaw: f64,
    pub theta0: f64,
    pub tau_cop: f64,
    pub eta: f64,
    pub v_th: f64,
    pub w_min: f64,
    pub sigma_w: f64,
    pub sigma_f: f64,
    pub sigma_v: f64,
    /// Collision force threshold in newtons.
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_lin: 0.5,
            w_yaw: 0.25,
            w_vz: 2.0,
            w_omega: 0.05,
            w_ori: 1.0,
            w_tau: 1e-5,
            w_qdd: 2.5e-7,
            w_da: 0.01,
            w_coll: 1.0,
            w_jl: 10.0,
            w_upright: 0.5,
            w_cop: 0.2,
            w_width: 0.2,
            w_gait_f: 0.5,
            w_gait_v: 0.5,
            w_slip: 0.04,
            w_impact: 0.0,
            w_f: 0.01,
            w_q: 0.05,
            w_qd: 1e-4,
            w_jump: 2.0,
            w_raibert: 0.0,
            sigma_lin: 0.25,
            sigma_yaw: 0.25,
            theta0: 0.3,
            tau_cop: 0.10,
            eta: 0.04,
            v_th: 1.5,
            w_min: 0.3,
            sigma_w: 0.05,
            sigma_f: 100.0,
            sigma_v: 10.0,
            f_min: 0.1,
            f_max: 100.0,
        }
    }
}

macro_rules! weight_field {
    ($s:expr, $t:expr, $($r:tt)+) => {{
        use Term::*;
        match $t {
            Lin => $($r)+ $s.w_lin,
            Yaw => $($r)+ $s.w_yaw,
            Vz => $($r)+ $s.w_vz,
            Omega => $($r)+ $s.w_omega,
            Ori => $($r)+ $s.w_ori,
            Torque => $($r)+ $s.w_tau,
            JointAcc => $($r)+ $s.w_qdd,
            ActionRate => $($r)+ $s.w_da,
            Collision => $($r)+ $s.w_coll,
            JointLimit => $($r)+ $s.w_jl,
            Upright => $($r)+ $s.w_upright,
            Cop => $($r)+ $s.w_cop,
            Width => $($r)+ $s.w_width,
            GaitForce => $($r)+ $s.w_gait_f,
            GaitVel => $($r)+ $s.w_gait_v,
            Slip => $($r)+ $s.w_slip,
            Impact => $($r)+ $s.w_impact,
            FootForce => $($r)+ $s.w_f,
            Pose => $($r)+ $s.w_q,
            JointVel => $($r)+ $s.w_qd,
            Jump => $($r)+ $s.w_jump,
            Raibert => $($r)+ $s.w_raibert,
        }
    }};
}

impl RewardWeights {
    /// Every weight zero, shaping constants at their defaults.
    pub fn zeros() -> Self {
        let mut w = Self::default();
        for t in Term::ALL {
            *w.weight_mut(t) = 0.0;
        }
        w
    }

    pub fn weight(&self, t: Term) -> f64 {
        *weight_field!(self, t, &)
    }

    pub fn weight_mut(&mut self, t: Term) -> &mut f64 {
        weight_field!(self, t, &mut)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma_lin", self.sigma_lin),
            ("sigma_yaw", self.sigma_yaw),
            ("tau_cop", self.tau_cop),
            ("eta", self.eta),
            ("v_th", self.v_th),
            ("sigma_w", self.sigma_w),
            ("sigma_f", self.sigma_f),
            ("sigma_v", self.sigma_v),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CoreError::Config(format!("reward `{name}` must be positive, got {v}")));
            }
        }
        if !(self.theta0 > 0.0 && self.theta0 < std::f64::consts::FRAC_PI_2) {
            return Err(CoreError::Config(format!("reward `theta0` must be in (0, pi/2), got {}", self.theta0)));
        }
        if self.f_min < 0.0 || self.f_max < 0.0 {
            return Err(CoreError::Config("reward force thresholds must be non-negative".into()));
        }
        if let Some(t) = Term::ALL.into_iter().find(|&t| !self.weight(t).is_finite()) {
            return Err(CoreError::Config(format!("reward weight for {} is not finite", t.name())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyKind {
    Base,
    Knee,
    Foot,
}

/// Ground reaction on one body, `[tangential, normal]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyContact {
    pub kind: BodyKind,
    pub force: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FootState {
    pub contact: bool,
    /// `[tangential, normal]` ground reaction.
    pub force: [f64; 2],
    /// World-frame `[x, z]` velocity.
    pub vel: [f64; 2],
    /// Vertical velocity at the previous control step.
    pub vz_prev: f64,
    pub x: f64,
    /// Desired contact from the gait schedule, in `[0, 1]`.
    pub desired_contact: f64,
    /// Foot-placement target for the Raibert heuristic.
    pub x_des: f64,
}

/// Everything the reward terms read for one control step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RewardInputs {
    pub v_xy: [f64; 2],
    pub v_cmd_xy: [f64; 2],
    pub omega_z: f64,
    pub omega_cmd_z: f64,
    pub v_z: f64,
    pub omega_xy: [f64; 2],
    pub g_xy: [f64; 2],
    pub torques: Vec<f64>,
    pub q: Vec<f64>,
    pub q0: Vec<f64>,
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub qd: Vec<f64>,
    pub qd_prev: Vec<f64>,
    pub dt: f64,
    pub action: Vec<f64>,
    pub action_prev: Vec<f64>,
    pub bodies: Vec<BodyContact>,
    pub feet: Vec<FootState>,
    pub cop: f64,
    pub support_center: f64,
    pub n_contact: usize,
    pub stance_width: f64,
    pub base_height: f64,
    pub h_cmd: f64,
    pub h0: f64,
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

pub fn r_lin(v_xy: &[f64], v_cmd_xy: &[f64], sigma_lin: f64) -> f64 {
    4.0 * (-sq_diff(v_cmd_xy, v_xy) / sigma_lin).exp()
}

pub fn r_yaw(omega_cmd_z: f64, omega_z: f64, sigma_yaw: f64) -> f64 {
    (-(omega_cmd_z - omega_z).powi(2) / sigma_yaw).exp()
}

pub fn p_vz(v_z: f64) -> f64 {
    v_z * v_z
}

pub fn p_omega(omega_xy: &[f64]) -> f64 {
    sq_norm(omega_xy)
}

pub fn p_ori(g_xy: &[f64]) -> f64 {
    sq_norm(g_xy)
}

pub fn p_torque(torques: &[f64]) -> f64 {
    sq_norm(torques)
}

pub fn p_joint_acc(qd_prev: &[f64], qd: &[f64], dt: f64) -> f64 {
    qd_prev.iter().zip(qd).map(|(a, b)| ((a - b) / dt).powi(2)).sum()
}

pub fn p_action_rate(action_prev: &[f64], action: &[f64]) -> f64 {
    sq_diff(action_prev, action)
}

/// Number of non-foot bodies pushing on the ground harder than `f_min`.
pub fn p_collision(bodies: &[BodyContact], f_min: f64) -> f64 {
    bodies
        .iter()
        .filter(|b| b.kind != BodyKind::Foot && sq_norm(&b.force).sqrt() > f_min)
        .count() as f64
}

pub fn p_joint_limit(q: &[f64], q_min: &[f64], q_max: &[f64]) -> f64 {
    q.iter()
        .zip(q_min.iter().zip(q_max))
        .map(|(&q, (&lo, &hi))| hinge(q - hi) + hinge(lo - q))
        .sum()
}

pub fn s_upright(g_xy: &[f64], theta0: f64) -> f64 {
    (-sq_norm(g_xy) / theta0.sin().powi(2)).exp()
}

pub fn s_cop(cop: f64, center: f64, n_contact: usize, tau: f64) -> f64 {
    if n_contact < 2 {
        return 0.0;
    }
    (-(cop - center).abs() / tau).exp()
}

pub fn width_gate(g_xy: &[f64], v_xy: &[f64], eta: f64, v_th: f64) -> bool {
    sq_norm(g_xy) > eta || sq_norm(v_xy).sqrt() > v_th
}

pub fn stance_gate_and_width(g_xy: &[f64], v_xy: &[f64], w: f64, p: &RewardWeights) -> f64 {
    if width_gate(g_xy, v_xy, p.eta, p.v_th) {
        (-hinge(p.w_min - w) / p.sigma_w).exp()
    } else {
        1.0
    }
}

fn mean_over(feet: &[FootState], f: impl Fn(&FootState) -> f64) -> f64 {
    if feet.is_empty() {
        return 0.0;
    }
    feet.iter().map(f).sum::<f64>() / feet.len() as f64
}

/// Penalizes ground force on feet that the schedule wants in swing.
pub fn r_gait_force(feet: &[FootState], sigma_f: f64) -> f64 {
    -mean_over(feet, |ft| {
        (1.0 - ft.desired_contact) * (1.0 - (-sq_norm(&ft.force) / sigma_f).exp())
    })
}

/// Penalizes foot motion on feet that the schedule wants in stance.
pub fn r_gait_vel(feet: &[FootState], sigma_v: f64) -> f64 {
    -mean_over(feet, |ft| ft.desired_contact * (1.0 - (-sq_norm(&ft.vel) / sigma_v).exp()))
}

/// Horizontal speed of feet in contact. The `xy` plane reduces to the
/// single horizontal axis in the planar model.
pub fn p_slip(feet: &[FootState]) -> f64 {
    feet.iter().filter(|f| f.contact).map(|f| f.vel[0] * f.vel[0]).sum()
}

pub fn p_impact(feet: &[FootState]) -> f64 {
    feet.iter()
        .filter(|f| f.contact)
        .map(|f| f.vz_prev.clamp(-100.0, 0.0).powi(2))
        .sum()
}

pub fn p_foot_force(feet: &[FootState], f_max: f64) -> f64 {
    feet.iter().map(|f| hinge(sq_norm(&f.force).sqrt() - f_max)).sum()
}

pub fn p_pose(q: &[f64], q0: &[f64]) -> f64 {
    sq_diff(q, q0)
}

pub fn p_joint_vel(qd: &[f64]) -> f64 {
    sq_norm(qd)
}

pub fn r_jump(z: f64, h_cmd: f64, h0: f64) -> f64 {
    -(z - (h_cmd + h0)).powi(2)
}

pub fn r_raibert(feet: &[FootState]) -> f64 {
    feet.iter().map(|f| (f.x_des - f.x).powi(2)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardBreakdown {
    /// Raw term values, indexed like [`Term::ALL`].
    pub values: [f64; 22],
    /// Signed weighted contributions, indexed like [`Term::ALL`].
    pub weighted: [f64; 22],
    pub total: f64,
}

impl RewardBreakdown {
    pub fn value(&self, t: Term) -> f64 {
        self.values[t.index()]
    }

    pub fn contribution(&self, t: Term) -> f64 {
        self.weighted[t.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.values.iter().all(|v| v.is_finite())
    }
}

pub fn term_value(t: Term, x: &RewardInputs, p: &RewardWeights) -> f64 {
    use Term::*;
    match t {
        Lin => r_lin(&x.v_xy, &x.v_cmd_xy, p.sigma_lin),
        Yaw => r_yaw(x.omega_cmd_z, x.omega_z, p.sigma_yaw),
        Vz => p_vz(x.v_z),
        Omega => p_omega(&x.omega_xy),
        Ori => p_ori(&x.g_xy),
        Torque => p_torque(&x.torques),
        JointAcc => p_joint_acc(&x.qd_prev, &x.qd, x.dt),
        ActionRate => p_action_rate(&x.action_prev, &x.action),
        Collision => p_collision(&x.bodies, p.f_min),
        JointLimit => p_joint_limit(&x.q, &x.q_min, &x.q_max),
        Upright => s_upright(&x.g_xy, p.theta0),
        Cop => s_cop(x.cop, x.support_center, x.n_contact, p.tau_cop),
        Width => stance_gate_and_width(&x.g_xy, &x.v_xy, x.stance_width, p),
        GaitForce => r_gait_force(&x.feet, p.sigma_f),
        GaitVel => r_gait_vel(&x.feet, p.sigma_v),
        Slip => p_slip(&x.feet),
        Impact => p_impact(&x.feet),
        FootForce => p_foot_force(&x.feet, p.f_max),
        Pose => p_pose(&x.q, &x.q0),
        JointVel => p_joint_vel(&x.qd),
        Jump => r_jump(x.base_height, x.h_cmd, x.h0),
        Raibert => r_raibert(&x.feet),
    }
}

/// Signed weighted sum from raw term values.
pub fn total_reward(values: &[f64; 22], p: &RewardWeights) -> ([f64; 22], f64) {
    let mut weighted = [0.0; 22];
    let mut total = 0.0;
    for t in Term::ALL {
        let w = p.weight(t);
        let c = match t.category() {
            Category::Penalty => -w * values[t.index()],
            Category::Task | Category::Stability => w * values[t.index()],
        };
        weighted[t.index()] = c;
        total += c;
    }
    (weighted, total)
}

/// Terms with zero weight are skipped and reported as 0.
pub fn evaluate(x: &RewardInputs, p: &RewardWeights) -> RewardBreakdown {
    let mut values = [0.0; 22];
    for t in Term::ALL {
        if p.weight(t) != 0.0 {
            values[t.index()] = term_value(t, x, p);
        }
    }
    let (weighted, total) = total_reward(&values, p);
    RewardBreakdown {
        values,
        weighted,
        total,
    }
}
