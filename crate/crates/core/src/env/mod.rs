//! Morphology-parameterized environments.
//!
//! Both environments run physics at `sim_dt` and act every `decimation`
//! physics steps. Observations come in three streams: the current frame
//! `o_t` (what the actor sees, with sensor noise), the last frames `h_t`
//! and privileged parameters `p_t = [friction, normalized base mass,
//! lag / max lag]`. The critic input is their concatenation.

pub mod curriculum;
pub mod domain;
pub mod history;
pub mod point_mass;
pub mod quad;
pub mod targets;

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::morphology::{index, sample_morphology, MorphRanges, MorphVector};
use crate::reward::{evaluate, FootState, RewardBreakdown, RewardInputs, RewardWeights, Term};

pub use curriculum::{CurriculumConfig, CurriculumState};
pub use domain::{ActionDelay, DomainEvent, DomainRandConfig, DomainRandomizer};
pub use history::History;
pub use point_mass::{pm_step, PointMassConfig, PointMassParams, PointMassState};
pub use quad::{QuadConfig, QuadModel, QuadSim};
pub use targets::{TargetMorphology, TargetSet};

pub const PRIVILEGED_DIM: usize = 3;
const PM_OBS_DIM: usize = 3;
const QUAD_OBS_DIM: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    PointMass,
    Quad,
}

impl EnvKind {
    pub fn obs_dim(self) -> usize {
        match self {
            EnvKind::PointMass => PM_OBS_DIM,
            EnvKind::Quad => QUAD_OBS_DIM,
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            EnvKind::PointMass => 1,
            EnvKind::Quad => quad::NJ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub episode_length_s: f64,
    pub sim_dt: f64,
    pub decimation: usize,
    pub history_len: usize,
    /// Largest magnitude of a policy action before it is applied.
    pub action_clip: f64,
    pub domain: DomainRandConfig,
    pub point_mass: PointMassConfig,
    pub quad: QuadConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            kind: EnvKind::Quad,
            episode_length_s: 20.03,
            sim_dt: 0.005,
            decimation: 4,
            history_len: 15,
            action_clip: 5.0,
            domain: DomainRandConfig::default(),
            point_mass: PointMassConfig::default(),
            quad: QuadConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn point_mass() -> Self {
        Self {
            kind: EnvKind::PointMass,
            ..Self::default()
        }
    }

    pub fn control_dt(&self) -> f64 {
        self.sim_dt * self.decimation as f64
    }

    /// Control steps per episode; the clock never passes the episode length.
    pub fn max_steps(&self) -> u64 {
        (self.episode_length_s / self.control_dt() + 1e-9).floor() as u64
    }

    pub fn obs_dim(&self) -> usize {
        self.kind.obs_dim()
    }

    pub fn critic_dim(&self) -> usize {
        self.obs_dim() * (1 + self.history_len) + PRIVILEGED_DIM
    }

    pub fn action_dim(&self) -> usize {
        self.kind.action_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sim_dt > 0.0 && self.episode_length_s > 0.0) || self.decimation == 0 {
            return Err(CoreError::Config("env timing must be positive".into()));
        }
        if self.max_steps() == 0 {
            return Err(CoreError::Config("episode shorter than one control step".into()));
        }
        if !(self.action_clip > 0.0) {
            return Err(CoreError::Config("env `action_clip` must be positive".into()));
        }
        self.domain.validate()?;
        self.point_mass.validate()?;
        self.quad.validate()
    }
}

/// Where an environment's morphology comes from at each reset.
#[derive(Debug, Clone, PartialEq)]
pub enum MorphSource {
    Sampled(MorphRanges),
    Fixed(MorphVector),
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    PointMass { params: PointMassParams, state: PointMassState },
    Quad(Box<QuadSim>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub steps: u64,
    pub total_reward: f64,
    /// Mean unweighted linear-tracking term over the episode.
    pub tracking_score: f64,
    pub mean_tracking_error: f64,
    pub fell: bool,
    pub fault: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub breakdown: RewardBreakdown,
    pub done: bool,
    /// The episode hit its time limit (the value should be bootstrapped).
    pub timeout: bool,
    pub fell: bool,
    pub fault: bool,
    pub forward_speed: f64,
    pub tracking_error: f64,
    pub clock: f64,
    pub events: Vec<DomainEvent>,
    pub episode: Option<EpisodeSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Env {
    config: EnvConfig,
    reward: RewardWeights,
    ranges: MorphRanges,
    source: MorphSource,
    rng: ChaCha8Rng,
    morph: MorphVector,
    body: Body,
    domain: DomainRandomizer,
    delay: ActionDelay,
    history: History,
    command: f64,
    steps: u64,
    /// Time limit of the current episode in control steps.
    limit: u64,
    action_prev: Vec<f64>,
    obs: Vec<f64>,
    clean_obs: Vec<f64>,
    qd_prev: [f64; quad::NJ],
    foot_vz_prev: [f64; 2],
    ep_reward: f64,
    ep_tracking: f64,
    ep_error: f64,
}

impl Env {
    /// `ranges` are the training ranges used for normalization.
    pub fn new(
        config: EnvConfig,
        reward: RewardWeights,
        ranges: MorphRanges,
        source: MorphSource,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        reward.validate()?;
        ranges.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let morph = match &source {
            MorphSource::Sampled(r) => sample_morphology(&mut rng, r),
            MorphSource::Fixed(m) => *m,
        };
        let domain = DomainRandomizer::new(config.domain.clone(), config.control_dt());
        let body = Self::build_body(&config, &morph, domain.friction());
        let obs_dim = config.obs_dim();
        let act = config.action_dim();
        let mut env = Self {
            history: History::new(config.history_len, obs_dim),
            delay: ActionDelay::new(0, act),
            reward,
            ranges,
            source,
            rng,
            morph,
            body,
            domain,
            command: 0.0,
            steps: 0,
            limit: 0,
            action_prev: vec![0.0; act],
            obs: vec![0.0; obs_dim],
            clean_obs: vec![0.0; obs_dim],
            qd_prev: [0.0; quad::NJ],
            foot_vz_prev: [0.0; 2],
            ep_reward: 0.0,
            ep_tracking: 0.0,
            ep_error: 0.0,
            config,
        };
        env.reset(0.0)?;
        Ok(env)
    }

    fn build_body(config: &EnvConfig, morph: &MorphVector, friction: f64) -> Body {
        match config.kind {
            EnvKind::PointMass => Body::PointMass {
                params: PointMassParams::from_morphology(morph, &config.point_mass),
                state: PointMassState::default(),
            },
            EnvKind::Quad => {
                let model = QuadModel::from_morphology(morph, &config.quad);
                Body::Quad(Box::new(QuadSim::new(config.quad.clone(), model, friction)))
            }
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn morphology(&self) -> &MorphVector {
        &self.morph
    }

    pub fn command(&self) -> f64 {
        self.command
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn clock(&self) -> f64 {
        self.steps as f64 * self.config.control_dt()
    }

    pub fn domain(&self) -> &DomainRandomizer {
        &self.domain
    }

    pub fn quad(&self) -> Option<&QuadSim> {
        match &self.body {
            Body::Quad(q) => Some(q),
            Body::PointMass { .. } => None,
        }
    }

    pub fn point_mass_state(&self) -> Option<PointMassState> {
        match &self.body {
            Body::PointMass { state, .. } => Some(*state),
            Body::Quad(_) => None,
        }
    }

    /// Current (noisy) observation frame `o_t`.
    pub fn obs(&self) -> &[f64] {
        &self.obs
    }

    /// Noise-free observation frame.
    pub fn clean_obs(&self) -> &[f64] {
        &self.clean_obs
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn privileged(&self) -> [f64; PRIVILEGED_DIM] {
        let max_lag = self.domain.config().max_lag_steps.max(1) as f64;
        [
            self.domain.friction(),
            self.morph.normalized[index::BASE_MASS],
            self.domain.lag() as f64 / max_lag,
        ]
    }

    /// Critic stream `[o_t, h_t, p_t]` written into `out`.
    pub fn write_critic_input(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.obs);
        out.extend_from_slice(self.history.as_slice());
        out.extend_from_slice(&self.privileged());
    }

    pub fn critic_input(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.config.critic_dim());
        self.write_critic_input(&mut v);
        v
    }

    /// Start a new episode with forward velocity command `command`. A
    /// sampled morphology is redrawn here and only here.
    pub fn reset(&mut self, command: f64) -> Result<()> {
        if let MorphSource::Sampled(r) = &self.source {
            self.morph = sample_morphology(&mut self.rng, r);
        }
        self.domain.reset(&mut self.rng);
        self.delay = ActionDelay::new(self.domain.lag(), self.config.action_dim());
        self.body = Self::build_body(&self.config, &self.morph, self.domain.friction());
        if let Body::Quad(sim) = &mut self.body {
            let targets = sim.config.nominal_q();
            let n = (sim.config.settle_time_s / self.config.sim_dt).round() as usize;
            for _ in 0..n {
                sim.step(&targets, self.config.sim_dt)?;
            }
            sim.begin_control_step();
        }
        self.command = command;
        self.steps = 0;
        self.limit = self.config.max_steps();
        self.history.clear();
        self.action_prev.fill(0.0);
        self.qd_prev = self.quad().map_or([0.0; quad::NJ], |s| s.joint_qd());
        self.foot_vz_prev = self.quad().map_or([0.0; 2], |s| {
            let f = s.feet();
            [f[0].vel[1], f[1].vel[1]]
        });
        self.ep_reward = 0.0;
        self.ep_tracking = 0.0;
        self.ep_error = 0.0;
        self.build_obs();
        Ok(())
    }

    /// Shorten the current episode to at most `steps` control steps. Used
    /// to spread the first timeouts of a batch of envs apart.
    pub fn truncate_episode(&mut self, steps: u64) {
        self.limit = steps.clamp(1, self.config.max_steps());
    }

    fn phase(&self) -> f64 {
        (self.clock() * self.config.quad.gait_frequency).fract()
    }

    fn build_obs(&mut self) {
        let ph = TAU * self.phase();
        let frame = &mut self.clean_obs;
        match &self.body {
            Body::PointMass { state, .. } => {
                frame.copy_from_slice(&[state.v, self.command, self.action_prev[0]]);
            }
            Body::Quad(sim) => {
                let q0 = sim.config.nominal_q();
                let q = sim.joint_q();
                let qd = sim.joint_qd();
                let v = sim.base_velocity();
                let (s, c) = sim.pitch().sin_cos();
                let mut i = 0;
                let mut put = |x: f64| {
                    frame[i] = x;
                    i += 1;
                };
                put(2.0 * v[0]);
                put(2.0 * v[1]);
                put(0.25 * sim.pitch_rate());
                put(s);
                put(-c);
                put(2.0 * self.command);
                (0..quad::NJ).for_each(|j| put(q[j] - q0[j]));
                (0..quad::NJ).for_each(|j| put(0.05 * qd[j]));
                (0..quad::NJ).for_each(|j| put(self.action_prev[j]));
                put(ph.sin());
                put(ph.cos());
            }
        }
        self.obs.copy_from_slice(&self.clean_obs);
        let scales: &[f64] = match self.config.kind {
            EnvKind::PointMass => &[0.05, 0.0, 0.0],
            EnvKind::Quad => &[
                0.2, 0.2, 0.05, 0.05, 0.05, 0.0, 0.01, 0.01, 0.01, 0.01, 0.075, 0.075, 0.075, 0.075, 0.0, 0.0, 0.0,
                0.0, 0.0, 0.0,
            ],
        };
        self.domain.add_noise(&mut self.obs, scales, &mut self.rng);
    }

    /// Apply one policy action for one control step.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let act_dim = self.config.action_dim();
        if action.len() != act_dim {
            return Err(CoreError::Dimension {
                what: "action",
                expected: act_dim,
                got: action.len(),
            });
        }
        let clip = self.config.action_clip;
        let action: Vec<f64> = action.iter().map(|a| a.clamp(-clip, clip)).collect();
        let applied = self.delay.push(&action).to_vec();
        self.steps += 1;
        let events = self.domain.tick(self.steps, &mut self.rng);
        let dt = self.config.sim_dt;
        let mut fault = false;
        let (inputs, forward_speed, fell) = match &mut self.body {
            Body::PointMass { params, state } => {
                for e in &events {
                    if let DomainEvent::Push(dv) = e {
                        state.v += dv;
                    }
                }
                let u = self.config.point_mass.action_scale * applied[0];
                for _ in 0..self.config.decimation {
                    pm_step(state, u, params, dt);
                }
                fault = !(state.v.is_finite() && state.x.is_finite());
                let inputs = RewardInputs {
                    v_xy: [state.v, 0.0],
                    v_cmd_xy: [self.command, 0.0],
                    action: action.clone(),
                    action_prev: self.action_prev.clone(),
                    dt: self.config.control_dt(),
                    ..RewardInputs::default()
                };
                (inputs, state.v, false)
            }
            Body::Quad(sim) => {
                for e in &events {
                    match *e {
                        DomainEvent::Push(dv) => sim.u[0] += dv,
                        DomainEvent::Friction(mu) => sim.friction = mu,
                    }
                }
                let q0 = sim.config.nominal_q();
                let scale = sim.config.action_scale;
                let targets: [f64; quad::NJ] = std::array::from_fn(|j| q0[j] + scale * applied[j]);
                sim.begin_control_step();
                for _ in 0..self.config.decimation {
                    if sim.step(&targets, dt).is_err() {
                        fault = true;
                        break;
                    }
                }
                let inputs = if fault {
                    RewardInputs::default()
                } else {
                    let phase = (self.steps as f64 * self.config.control_dt() * sim.config.gait_frequency).fract();
                    quad_reward_inputs(
                        sim,
                        self.command,
                        phase,
                        &action,
                        &self.action_prev,
                        &self.qd_prev,
                        &self.foot_vz_prev,
                        self.config.control_dt(),
                    )
                };
                let fell = !fault && sim.fallen();
                (inputs, sim.base_velocity()[0], fell)
            }
        };
        let mut breakdown = evaluate(&inputs, &self.reward);
        if !breakdown.is_finite() {
            fault = true;
        }
        if fault {
            breakdown.total = 0.0;
        }
        let reward = breakdown.total;
        let tracking_error = (self.command - forward_speed).abs();
        let timeout = self.steps >= self.limit;
        let done = fault || fell || timeout;

        self.ep_reward += reward;
        self.ep_tracking += crate::reward::r_lin(&inputs.v_xy, &inputs.v_cmd_xy, self.reward.sigma_lin);
        self.ep_error += if fault { 0.0 } else { tracking_error };
        if let Body::Quad(sim) = &self.body {
            self.qd_prev = sim.joint_qd();
            let f = sim.feet();
            self.foot_vz_prev = [f[0].vel[1], f[1].vel[1]];
        }
        self.history.push(&self.clean_obs);
        self.action_prev = action;
        if !fault {
            self.build_obs();
        }
        let episode = done.then(|| EpisodeSummary {
            steps: self.steps,
            total_reward: self.ep_reward,
            tracking_score: self.ep_tracking / self.steps as f64,
            mean_tracking_error: self.ep_error / self.steps as f64,
            fell,
            fault,
        });
        Ok(StepOutcome {
            reward,
            breakdown,
            done,
            timeout: timeout && !fell && !fault,
            fell,
            fault,
            forward_speed,
            tracking_error,
            clock: self.clock(),
            events,
            episode,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn quad_reward_inputs(
    sim: &QuadSim,
    command: f64,
    phase: f64,
    action: &[f64],
    action_prev: &[f64],
    qd_prev: &[f64; quad::NJ],
    foot_vz_prev: &[f64; 2],
    control_dt: f64,
) -> RewardInputs {
    let cfg = &sim.config;
    let report = &sim.report;
    let feet_now = sim.feet();
    let hips = sim.hip_x();
    let stance_time = cfg.gait_duty / cfg.gait_frequency;
    let feet: Vec<FootState> = (0..2)
        .map(|l| {
            // rear leg runs half a cycle behind the front leg
            let leg_phase = (phase + 0.5 * l as f64).fract();
            let f = feet_now[l];
            FootState {
                contact: f.in_contact(),
                force: f.force,
                vel: f.vel,
                vz_prev: foot_vz_prev[l],
                x: f.pos[0],
                desired_contact: if leg_phase < cfg.gait_duty { 1.0 } else { 0.0 },
                x_des: hips[l] + 0.5 * command * stance_time,
            }
        })
        .collect();
    let in_contact: Vec<&FootState> = feet.iter().filter(|f| f.contact).collect();
    let n_contact = in_contact.len();
    let load: f64 = in_contact.iter().map(|f| f.force[1]).sum();
    let (cop, center, width) = if n_contact > 0 && load > 0.0 {
        let cop = in_contact.iter().map(|f| f.force[1] * f.x).sum::<f64>() / load;
        let center = in_contact.iter().map(|f| f.x).sum::<f64>() / n_contact as f64;
        let lo = in_contact.iter().map(|f| f.x).fold(f64::INFINITY, f64::min);
        let hi = in_contact.iter().map(|f| f.x).fold(f64::NEG_INFINITY, f64::max);
        (cop, center, if n_contact >= 2 { hi - lo } else { 0.0 })
    } else {
        (0.0, 0.0, 0.0)
    };
    let v = sim.base_velocity();
    RewardInputs {
        v_xy: [v[0], 0.0],
        v_cmd_xy: [command, 0.0],
        omega_z: 0.0,
        omega_cmd_z: 0.0,
        v_z: v[1],
        omega_xy: [0.0, sim.pitch_rate()],
        g_xy: [sim.pitch().sin(), 0.0],
        torques: report.torques.to_vec(),
        q: report.q_unclamped.to_vec(),
        q0: cfg.nominal_q().to_vec(),
        q_min: sim.model.q_min.to_vec(),
        q_max: sim.model.q_max.to_vec(),
        qd: sim.joint_qd().to_vec(),
        qd_prev: qd_prev.to_vec(),
        dt: control_dt,
        action: action.to_vec(),
        action_prev: action_prev.to_vec(),
        bodies: report.bodies(),
        feet,
        cop,
        support_center: center,
        n_contact,
        stance_width: width,
        base_height: sim.base_height(),
        h_cmd: 0.0,
        h0: cfg.nominal_height(),
    }
}

/// Reward weights for the point-mass tracker: velocity tracking and a small
/// action-rate penalty.
pub fn point_mass_reward() -> RewardWeights {
    let mut w = RewardWeights::zeros();
    w.w_lin = 1.0;
    w.w_da = 0.01;
    w
}

/// Term names in breakdown order, for CSV headers.
pub fn reward_columns() -> Vec<&'static str> {
    Term::ALL.iter().map(|t| t.name()).collect()
}

#[cfg(test)]
mod tests;
