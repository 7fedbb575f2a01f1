//! Sagittal-plane quadruped: a floating base with a front and a rear leg,
//! each leg standing in for a left/right pair.
//!
//! Generalized coordinates are `[x, z, pitch, front hip, front knee, rear
//! hip, rear knee]`. Pitch is positive nose-down and joint angles use the
//! same rotation sense, so a segment with absolute angle `α` points along
//! `(−sin α, −cos α)`.
//!
//! Each physics step builds the mass matrix from body Jacobians and takes a
//! linearly implicit Euler step in which joint PD terms and contact
//! spring/damper terms are treated implicitly:
//!
//! `(M − dt·D − dt²·K)·u⁺ = M·u + dt·(f − D·u)`
//!
//! Joint limits are enforced as hard stops by projecting the new velocity
//! so that no joint crosses its limit.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::morphology::{index, MorphVector};
use crate::reward::{BodyContact, BodyKind};

pub const NQ: usize = 7;
pub const NJ: usize = 4;
const GRAVITY: f64 = 9.81;

type Mat = SMatrix<f64, NQ, NQ>;
type Vec7 = SVector<f64, NQ>;
type Jac = SMatrix<f64, 2, NQ>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadConfig {
    pub thigh_length: f64,
    pub calf_length: f64,
    /// Horizontal distance from the base centre to each hip.
    pub hip_offset: f64,
    pub base_length: f64,
    pub base_height: f64,
    pub foot_radius: f64,
    /// Nominal `[hip, knee]` angles, shared by both legs.
    pub nominal_pose: [f64; 2],
    pub kp: f64,
    pub kd: f64,
    pub action_scale: f64,
    /// Torque limit per kg of thigh plus calf mass, N·m/kg.
    pub torque_per_kg: f64,
    pub armature: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    /// Viscous coefficient of the tangential contact force before the
    /// friction cone caps it.
    pub tangential_damping: f64,
    pub gait_frequency: f64,
    pub gait_duty: f64,
    /// Time spent settling at the nominal pose before an episode starts.
    pub settle_time_s: f64,
    pub fall_pitch: f64,
    /// Fall when the base drops below this fraction of nominal height.
    pub fall_height_fraction: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            thigh_length: 0.213,
            calf_length: 0.213,
            hip_offset: 0.1934,
            base_length: 0.38,
            base_height: 0.1,
            foot_radius: 0.02,
            nominal_pose: [0.8, -1.5],
            kp: 40.0,
            kd: 1.0,
            action_scale: 0.25,
            torque_per_kg: 20.0,
            armature: 0.02,
            contact_stiffness: 2.0e4,
            contact_damping: 500.0,
            tangential_damping: 2.0e3,
            gait_frequency: 2.0,
            gait_duty: 0.5,
            settle_time_s: 1.0,
            fall_pitch: 1.2,
            fall_height_fraction: 0.4,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("thigh_length", self.thigh_length),
            ("calf_length", self.calf_length),
            ("hip_offset", self.hip_offset),
            ("base_length", self.base_length),
            ("base_height", self.base_height),
            ("contact_stiffness", self.contact_stiffness),
            ("gait_frequency", self.gait_frequency),
            ("fall_pitch", self.fall_pitch),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CoreError::Config(format!("quad `{name}` must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("foot_radius", self.foot_radius),
            ("kp", self.kp),
            ("kd", self.kd),
            ("action_scale", self.action_scale),
            ("torque_per_kg", self.torque_per_kg),
            ("armature", self.armature),
            ("contact_damping", self.contact_damping),
            ("tangential_damping", self.tangential_damping),
            ("settle_time_s", self.settle_time_s),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CoreError::Config(format!("quad `{name}` must be non-negative, got {v}")));
            }
        }
        if !(self.gait_duty > 0.0 && self.gait_duty < 1.0) {
            return Err(CoreError::Config("quad `gait_duty` must be in (0, 1)".into()));
        }
        if !(self.fall_height_fraction > 0.0 && self.fall_height_fraction < 1.0) {
            return Err(CoreError::Config("quad `fall_height_fraction` must be in (0, 1)".into()));
        }
        Ok(())
    }

    /// Base height with both legs at the nominal pose and feet touching
    /// the ground.
    pub fn nominal_height(&self) -> f64 {
        let [qh, qk] = self.nominal_pose;
        self.thigh_length * qh.cos() + self.calf_length * (qh + qk).cos() + self.foot_radius
    }

    pub fn nominal_q(&self) -> [f64; NJ] {
        let [h, k] = self.nominal_pose;
        [h, k, h, k]
    }
}

/// Morphology-dependent physical constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadModel {
    /// Base plus the hip masses rigidly attached to it.
    pub base_mass: f64,
    pub base_inertia: f64,
    pub thigh_mass: f64,
    pub calf_mass: f64,
    pub foot_mass: f64,
    pub tau_max: f64,
    pub q_min: [f64; NJ],
    pub q_max: [f64; NJ],
}

impl QuadModel {
    /// Every planar leg carries the mass of two real legs. Abduction
    /// ("hip") limits have no planar joint and do not enter here.
    pub fn from_morphology(m: &MorphVector, cfg: &QuadConfig) -> Self {
        use index::*;
        let hips = 4.0 * m.get(HIP_MASS);
        let base = m.get(BASE_MASS);
        let box_inertia = base * (cfg.base_length.powi(2) + cfg.base_height.powi(2)) / 12.0;
        let hip_lo = m.get(THIGH_MIN);
        let hip_hi = m.get(THIGH_MAX);
        let knee_lo = m.get(CALF_MIN);
        let knee_hi = m.get(CALF_MAX);
        Self {
            base_mass: base + hips,
            base_inertia: box_inertia + hips * cfg.hip_offset.powi(2),
            thigh_mass: 2.0 * m.get(THIGH_MASS),
            calf_mass: 2.0 * m.get(CALF_MASS),
            foot_mass: 2.0 * m.get(FOOT_MASS),
            tau_max: cfg.torque_per_kg * 2.0 * (m.get(THIGH_MASS) + m.get(CALF_MASS)),
            q_min: [hip_lo, knee_lo, hip_lo, knee_lo],
            q_max: [hip_hi, knee_hi, hip_hi, knee_hi],
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.base_mass + 2.0 * (self.thigh_mass + self.calf_mass + self.foot_mass)
    }
}

/// A point rigidly attached to the base plus a chain of leg segments.
#[derive(Debug, Clone, Copy)]
struct Point {
    pos: [f64; 2],
    jac: Jac,
    /// `J̇·u`, the velocity-product part of the point acceleration.
    bias: [f64; 2],
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    /// World-frame vector of the segment.
    v: [f64; 2],
    /// Derivative of `v` with respect to its absolute angle.
    dv: [f64; 2],
    alpha_dot: f64,
}

/// Kinematics of one leg at the current state.
#[derive(Debug, Clone, Copy)]
struct LegKinematics {
    hip: Point,
    knee: Point,
    foot: Point,
    thigh_com: Point,
    calf_com: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContactPoint {
    pub penetration: f64,
    /// `[tangential, normal]`.
    pub force: [f64; 2],
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

impl ContactPoint {
    pub fn in_contact(&self) -> bool {
        self.force[1] > 0.0
    }
}

/// Contact and actuation report for the last physics step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadReport {
    /// Front then rear.
    pub feet: [ContactPoint; 2],
    pub knees: [ContactPoint; 2],
    /// Rear-bottom then front-bottom corner.
    pub base_corners: [ContactPoint; 2],
    pub torques: [f64; NJ],
    /// Joint positions before the hard stops were applied, from the
    /// physics step with the largest overshoot of the control step.
    pub q_unclamped: [f64; NJ],
    pub max_overshoot: f64,
}

impl QuadReport {
    pub fn bodies(&self) -> Vec<BodyContact> {
        let base_force = [
            self.base_corners[0].force[0] + self.base_corners[1].force[0],
            self.base_corners[0].force[1] + self.base_corners[1].force[1],
        ];
        let mut v = vec![BodyContact {
            kind: BodyKind::Base,
            force: base_force,
        }];
        v.extend(self.knees.iter().map(|k| BodyContact {
            kind: BodyKind::Knee,
            force: k.force,
        }));
        v.extend(self.feet.iter().map(|f| BodyContact {
            kind: BodyKind::Foot,
            force: f.force,
        }));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadSim {
    pub config: QuadConfig,
    pub model: QuadModel,
    /// Generalized positions.
    pub q: [f64; NQ],
    /// Generalized velocities.
    pub u: [f64; NQ],
    pub friction: f64,
    /// Overrides of the PD gains, used for passive-dynamics checks.
    pub kp: f64,
    pub kd: f64,
    pub report: QuadReport,
}

type StepLu = nalgebra::LU<f64, nalgebra::Const<NQ>, nalgebra::Const<NQ>>;

#[derive(Debug, Clone, Copy, Default)]
struct ContactMode {
    active: bool,
    /// Separating fast enough that the force sits at its positive floor.
    floor: bool,
    /// `Some(force)` when the tangential force is at the friction cap.
    slip: Option<f64>,
}

impl ContactMode {
    fn same_kind(&self, other: &ContactMode) -> bool {
        self.active == other.active && self.floor == other.floor && self.slip.is_some() == other.slip.is_some()
    }
}

fn rot(theta: f64, b: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * b[0] + s * b[1], -s * b[0] + c * b[1]]
}

fn rot_d(theta: f64, b: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [-s * b[0] + c * b[1], -c * b[0] - s * b[1]]
}

impl QuadSim {
    pub fn new(config: QuadConfig, model: QuadModel, friction: f64) -> Self {
        let kp = config.kp;
        let kd = config.kd;
        let mut sim = Self {
            config,
            model,
            q: [0.0; NQ],
            u: [0.0; NQ],
            friction,
            kp,
            kd,
            report: QuadReport::default(),
        };
        sim.place_nominal();
        sim
    }

    /// Nominal pose, at rest, feet just touching the ground.
    pub fn place_nominal(&mut self) {
        let q0 = self.config.nominal_q();
        let mut q = [0.0; NQ];
        for j in 0..NJ {
            q[3 + j] = q0[j].clamp(self.model.q_min[j], self.model.q_max[j]);
        }
        self.q = q;
        self.u = [0.0; NQ];
        let lowest = (0..2)
            .map(|l| self.leg(l).foot.pos[1])
            .fold(f64::INFINITY, f64::min);
        self.q[1] = self.config.foot_radius - lowest;
        self.report = QuadReport::default();
    }

    pub fn joint_q(&self) -> [f64; NJ] {
        [self.q[3], self.q[4], self.q[5], self.q[6]]
    }

    pub fn joint_qd(&self) -> [f64; NJ] {
        [self.u[3], self.u[4], self.u[5], self.u[6]]
    }

    pub fn base_x(&self) -> f64 {
        self.q[0]
    }

    pub fn base_height(&self) -> f64 {
        self.q[1]
    }

    pub fn pitch(&self) -> f64 {
        self.q[2]
    }

    pub fn base_velocity(&self) -> [f64; 2] {
        [self.u[0], self.u[1]]
    }

    pub fn pitch_rate(&self) -> f64 {
        self.u[2]
    }

    pub fn fallen(&self) -> bool {
        self.pitch().abs() > self.config.fall_pitch
            || self.base_height() < self.config.fall_height_fraction * self.config.nominal_height()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.u).all(|x| x.is_finite())
    }

    fn body_point(&self, b: [f64; 2], segments: &[(Segment, f64, &[usize])], thd: f64) -> Point {
        let theta = self.q[2];
        let rb = rot(theta, b);
        let drb = rot_d(theta, b);
        let mut pos = [self.q[0] + rb[0], self.q[1] + rb[1]];
        let mut jac = Jac::zeros();
        jac[(0, 0)] = 1.0;
        jac[(1, 1)] = 1.0;
        jac[(0, 2)] = drb[0];
        jac[(1, 2)] = drb[1];
        let mut bias = [-rb[0] * thd * thd, -rb[1] * thd * thd];
        for (seg, c, joints) in segments {
            pos[0] += c * seg.v[0];
            pos[1] += c * seg.v[1];
            jac[(0, 2)] += c * seg.dv[0];
            jac[(1, 2)] += c * seg.dv[1];
            for &j in joints.iter() {
                jac[(0, j)] += c * seg.dv[0];
                jac[(1, j)] += c * seg.dv[1];
            }
            bias[0] -= c * seg.v[0] * seg.alpha_dot * seg.alpha_dot;
            bias[1] -= c * seg.v[1] * seg.alpha_dot * seg.alpha_dot;
        }
        Point { pos, jac, bias }
    }

    fn segment(len: f64, alpha: f64, alpha_dot: f64) -> Segment {
        let (s, c) = alpha.sin_cos();
        Segment {
            v: [-len * s, -len * c],
            dv: [-len * c, len * s],
            alpha_dot,
        }
    }

    /// Leg 0 is the front leg, leg 1 the rear.
    fn leg(&self, l: usize) -> LegKinematics {
        self.leg_with(l, &self.u)
    }

    /// Leg kinematics at the current pose with velocity-product terms taken
    /// at generalized velocity `u`.
    fn leg_with(&self, l: usize, u: &[f64]) -> LegKinematics {
        let hx = if l == 0 { self.config.hip_offset } else { -self.config.hip_offset };
        let jh = 3 + 2 * l;
        let jk = jh + 1;
        let a1 = self.q[2] + self.q[jh];
        let a2 = a1 + self.q[jk];
        let a1d = u[2] + u[jh];
        let a2d = a1d + u[jk];
        let thigh = Self::segment(self.config.thigh_length, a1, a1d);
        let calf = Self::segment(self.config.calf_length, a2, a2d);
        let b = [hx, 0.0];
        let hip_j: &[usize] = &[jh];
        let knee_j: &[usize] = &[jh, jk];
        LegKinematics {
            hip: self.body_point(b, &[], u[2]),
            thigh_com: self.body_point(b, &[(thigh, 0.5, hip_j)], u[2]),
            knee: self.body_point(b, &[(thigh, 1.0, hip_j)], u[2]),
            calf_com: self.body_point(b, &[(thigh, 1.0, hip_j), (calf, 0.5, knee_j)], u[2]),
            foot: self.body_point(b, &[(thigh, 1.0, hip_j), (calf, 1.0, knee_j)], u[2]),
        }
    }

    fn corners(&self) -> [Point; 2] {
        let bl = 0.5 * self.config.base_length;
        let bh = -0.5 * self.config.base_height;
        [self.body_point([-bl, bh], &[], self.u[2]), self.body_point([bl, bh], &[], self.u[2])]
    }

    fn vel(p: &Point, u: &Vec7) -> [f64; 2] {
        let v = p.jac * u;
        [v[0], v[1]]
    }

    /// Mass matrix (armature included), velocity-product forces and
    /// gravity, all in generalized coordinates.
    fn dynamics_terms(&self, legs: &[LegKinematics; 2]) -> (Mat, Vec7) {
        let m = &self.model;
        let mut mass = Mat::zeros();
        let mut rhs = Vec7::zeros();
        let mut add_point = |p: &Point, mass_pt: f64| {
            if mass_pt == 0.0 {
                return;
            }
            mass += mass_pt * p.jac.transpose() * p.jac;
            let acc = nalgebra::Vector2::new(p.bias[0], p.bias[1] + GRAVITY);
            rhs -= mass_pt * p.jac.transpose() * acc;
        };
        let base = self.body_point([0.0, 0.0], &[], 0.0);
        add_point(&base, m.base_mass);
        for leg in legs {
            add_point(&leg.thigh_com, m.thigh_mass);
            add_point(&leg.calf_com, m.calf_mass);
            add_point(&leg.foot, m.foot_mass);
        }
        mass[(2, 2)] += m.base_inertia;
        let i_thigh = m.thigh_mass * self.config.thigh_length.powi(2) / 12.0;
        let i_calf = m.calf_mass * self.config.calf_length.powi(2) / 12.0;
        for l in 0..2 {
            let jh = 3 + 2 * l;
            let jk = jh + 1;
            let mut w = Vec7::zeros();
            w[2] = 1.0;
            w[jh] = 1.0;
            mass += i_thigh * w * w.transpose();
            w[jk] = 1.0;
            mass += i_calf * w * w.transpose();
        }
        for j in 3..NQ {
            mass[(j, j)] += self.config.armature;
        }
        (mass, rhs)
    }

    /// Total mechanical energy: kinetic (with rotor armature), gravity and
    /// the elastic energy stored in penetrating contacts.
    pub fn energy(&self) -> f64 {
        let legs = [self.leg(0), self.leg(1)];
        let (mass, _) = self.dynamics_terms(&legs);
        let u = Vec7::from_column_slice(&self.u);
        let kinetic = 0.5 * (u.transpose() * mass * u)[0];
        let m = &self.model;
        let mut potential = m.base_mass * GRAVITY * self.q[1];
        for leg in &legs {
            potential += GRAVITY
                * (m.thigh_mass * leg.thigh_com.pos[1]
                    + m.calf_mass * leg.calf_com.pos[1]
                    + m.foot_mass * leg.foot.pos[1]);
        }
        let k = self.config.contact_stiffness;
        let mut elastic = 0.0;
        for (p, r) in self.contact_points(&legs) {
            let pen = r - p.pos[1];
            if pen > 0.0 {
                elastic += 0.5 * k * pen * pen;
            }
        }
        kinetic + potential + elastic
    }

    /// Feet, knees and the two lower base corners, with their radii.
    fn contact_points(&self, legs: &[LegKinematics; 2]) -> [(Point, f64); 6] {
        let [c0, c1] = self.corners();
        let r = self.config.foot_radius;
        [
            (legs[0].foot, r),
            (legs[1].foot, r),
            (legs[0].knee, 0.0),
            (legs[1].knee, 0.0),
            (c0, 0.0),
            (c1, 0.0),
        ]
    }

    /// Advance one physics step toward joint targets. Returns the largest
    /// joint-limit overshoot of the unconstrained step.
    pub fn step(&mut self, targets: &[f64; NJ], dt: f64) -> Result<f64> {
        let legs = [self.leg(0), self.leg(1)];
        let (mass, mut passive) = self.dynamics_terms(&legs);
        let mut f = Vec7::zeros();
        let mut damp = Mat::zeros();
        let mut stiff = Mat::zeros();
        let u = Vec7::from_column_slice(&self.u);

        let tau_max = self.model.tau_max;
        let mut torques = [0.0; NJ];
        for j in 0..NJ {
            let qi = 3 + j;
            let raw = self.kp * (targets[j] - self.q[qi]) - self.kd * self.u[qi];
            let tau = raw.clamp(-tau_max, tau_max);
            torques[j] = tau;
            f[qi] += tau;
            if raw.abs() < tau_max {
                damp[(qi, qi)] -= self.kd;
                stiff[(qi, qi)] -= self.kp;
            }
        }

        // Contacts are resolved at the end of the step: a point is active
        // when its linearized end-of-step penetration is positive, which also
        // catches points that would pass through the ground within the step.
        let k = self.config.contact_stiffness;
        let c = self.config.contact_damping;
        let bt = self.config.tangential_damping;
        let points = self.contact_points(&legs);
        let mut modes = [ContactMode::default(); 6];
        for (mode, (p, r)) in modes.iter_mut().zip(&points) {
            let pen0 = r - p.pos[1];
            mode.active = pen0 > 0.0 || pen0 - dt * Self::vel(p, &u)[1] > 0.0;
        }
        let mut contacts = [ContactPoint::default(); 6];
        // Velocity-product forces are re-evaluated at the new velocity so that
        // they do no work over the step, even across impacts.
        let mut solved: Option<(Vec7, Vec<(usize, f64)>, [f64; NJ], f64)> = None;
        for _ in 0..24 {
            let mut f_c = f + passive;
            let mut damp_c = damp;
            let mut stiff_c = stiff;
            for (mode, (p, r)) in modes.iter().zip(&points) {
                if !mode.active {
                    continue;
                }
                let jx = p.jac.row(0);
                let jz = p.jac.row(1);
                let pen0 = r - p.pos[1];
                let vz = Self::vel(p, &u)[1];
                if mode.floor {
                    f_c += jz.transpose() * (0.1 * k * pen0);
                    stiff_c -= 0.1 * k * jz.transpose() * jz;
                } else if pen0 <= 0.0 {
                    // touching down within the step: the penetration rate
                    // counts only the part of the motion below the ground
                    let k_eff = k + c / dt;
                    f_c += jz.transpose() * (k_eff * pen0);
                    stiff_c -= k_eff * jz.transpose() * jz;
                } else {
                    f_c += jz.transpose() * (k * pen0 - c * vz);
                    stiff_c -= k * jz.transpose() * jz;
                    damp_c -= c * jz.transpose() * jz;
                }
                match mode.slip {
                    None => {
                        f_c += jx.transpose() * (-bt * Self::vel(p, &u)[0]);
                        damp_c -= bt * jx.transpose() * jx;
                    }
                    Some(ft) => f_c += jx.transpose() * ft,
                }
            }
            let a = mass - dt * damp_c - dt * dt * stiff_c;
            let b = mass * u + dt * (f_c - damp_c * u);
            let lu = a.lu();
            let u_free = lu.solve(&b).ok_or_else(|| CoreError::SimFault("singular quad mass matrix".into()))?;
            let (u_new, stops, q_unclamped, overshoot) = self.joint_stops(&lu, &b, u_free, dt)?;

            let mut next = modes;
            for ((slot, mode), (p, r)) in contacts.iter_mut().zip(next.iter_mut()).zip(&points) {
                let vel = Self::vel(p, &u_new);
                let pen0 = r - p.pos[1];
                let pen = pen0 - dt * vel[1];
                *slot = ContactPoint {
                    penetration: pen.max(0.0),
                    force: [0.0, 0.0],
                    pos: p.pos,
                    vel,
                };
                mode.active = pen > 0.0;
                if !mode.active {
                    mode.floor = false;
                    mode.slip = None;
                    continue;
                }
                let rate = if pen0 <= 0.0 { pen / dt } else { -vel[1] };
                let spring_damper = k * pen + c * rate;
                let floor = 0.1 * k * pen;
                mode.floor = spring_damper < floor;
                let fn_ = spring_damper.max(floor);
                let cap = self.friction * fn_;
                let viscous = -bt * vel[0];
                let ft = if viscous.abs() <= cap {
                    mode.slip = None;
                    viscous
                } else {
                    let ft = -cap * vel[0].signum();
                    mode.slip = Some(ft);
                    ft
                };
                slot.force = [ft, fn_];
            }
            let converged = solved
                .as_ref()
                .is_some_and(|prev| (u_new - prev.0).norm() <= 1e-10 * (1.0 + u_new.norm()));
            let settled = converged && next.iter().zip(&modes).all(|(a, b)| a.same_kind(b));
            passive = self.dynamics_terms(&[self.leg_with(0, u_new.as_slice()), self.leg_with(1, u_new.as_slice())]).1;
            solved = Some((u_new, stops, q_unclamped, overshoot));
            if settled {
                break;
            }
            modes = next;
        }
        let (u_new, active, q_unclamped, overshoot) = solved.expect("contact loop runs at least once");
        let q_limits = (self.model.q_min, self.model.q_max);
        for i in 0..NQ {
            self.u[i] = u_new[i];
            self.q[i] += dt * u_new[i];
        }
        for &(j, _) in &active {
            // land exactly on the stop despite rounding
            self.q[3 + j] = self.q[3 + j].clamp(q_limits.0[j], q_limits.1[j]);
        }
        if !self.is_finite() {
            return Err(CoreError::SimFault("quad state became non-finite".into()));
        }

        let overshoot = overshoot.max(0.0);
        if overshoot >= self.report.max_overshoot {
            self.report.q_unclamped = q_unclamped;
            self.report.max_overshoot = overshoot;
        }
        self.report.torques = torques;
        self.report.feet = [contacts[0], contacts[1]];
        self.report.knees = [contacts[2], contacts[3]];
        self.report.base_corners = [contacts[4], contacts[5]];
        Ok(overshoot)
    }

    /// Hard joint stops on top of a free step velocity. Returns the
    /// constrained velocity, the joints held at a stop, the unclamped joint
    /// prediction and its largest overshoot.
    #[allow(clippy::type_complexity)]
    fn joint_stops(&self, lu: &StepLu, b: &Vec7, mut u_new: Vec7, dt: f64) -> Result<(Vec7, Vec<(usize, f64)>, [f64; NJ], f64)> {
            let q_limits = (self.model.q_min, self.model.q_max);
            let mut q_unclamped = [0.0; NJ];
            let mut overshoot = 0.0f64;
            for j in 0..NJ {
                let pred = self.q[3 + j] + dt * u_new[3 + j];
                q_unclamped[j] = pred;
                overshoot = overshoot.max(pred - q_limits.1[j]).max(q_limits.0[j] - pred);
            }
            let mut active: Vec<(usize, f64)> = Vec::new();
            for _ in 0..NJ {
                let mut added = false;
                for j in 0..NJ {
                    if active.iter().any(|&(a, _)| a == j) {
                        continue;
                    }
                    let qi = 3 + j;
                    let pred = self.q[qi] + dt * u_new[qi];
                    let bound = if pred > q_limits.1[j] {
                        Some(q_limits.1[j])
                    } else if pred < q_limits.0[j] {
                        Some(q_limits.0[j])
                    } else {
                        None
                    };
                    if let Some(lim) = bound {
                        active.push((j, (lim - self.q[qi]) / dt));
                        added = true;
                    }
                }
                if !added {
                    break;
                }
                u_new = self.project(lu, b, &active)?;
            }
        Ok((u_new, active, q_unclamped, overshoot))
    }

    /// Velocity closest to the unconstrained solution, in the metric of the
    /// step matrix, that moves each active joint exactly onto its stop.
    fn project(
        &self,
        lu: &StepLu,
        b: &Vec7,
        active: &[(usize, f64)],
    ) -> Result<Vec7> {
        let n = active.len();
        let u0 = lu.solve(b).ok_or_else(|| CoreError::SimFault("singular quad mass matrix".into()))?;
        let mut cols = Vec::with_capacity(n);
        for &(j, _) in active {
            let mut e = Vec7::zeros();
            e[3 + j] = 1.0;
            cols.push(lu.solve(&e).ok_or_else(|| CoreError::SimFault("singular quad mass matrix".into()))?);
        }
        let s = DMatrix::from_fn(n, n, |r, c| cols[c][3 + active[r].0]);
        let gap = DVector::from_fn(n, |r, _| active[r].1 - u0[3 + active[r].0]);
        let lambda = s
            .lu()
            .solve(&gap)
            .ok_or_else(|| CoreError::SimFault("degenerate joint-stop system".into()))?;
        let mut u = u0;
        for (c, col) in cols.iter().enumerate() {
            u += lambda[c] * col;
        }
        Ok(u)
    }

    /// Start a new control step: forget the previous overshoot record.
    pub fn begin_control_step(&mut self) {
        self.report.max_overshoot = 0.0;
        self.report.q_unclamped = self.joint_q();
    }

    /// World `[x, z]` positions and velocities of the feet, front first.
    pub fn feet(&self) -> [ContactPoint; 2] {
        let u = Vec7::from_column_slice(&self.u);
        let mut out = self.report.feet;
        for (l, slot) in out.iter_mut().enumerate() {
            let p = self.leg(l).foot;
            slot.pos = p.pos;
            slot.vel = Self::vel(&p, &u);
        }
        out
    }

    pub fn hip_x(&self) -> [f64; 2] {
        [self.leg(0).hip.pos[0], self.leg(1).hip.pos[0]]
    }
}
