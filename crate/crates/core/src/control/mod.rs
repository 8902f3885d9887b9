//! Hybrid intermittent compliance control.
//!
//! Each joint either tracks the network target (active) or yields to the
//! estimated external torque (compliant). Entry into compliance is immediate
//! once `|τ̂^ext| > τ^th`; the way back requires `|τ̂^ext| < ρ·τ^th` for
//! `N_hold` consecutive ticks. Every commanded target moves at most `Δ_max`
//! per tick, relative both to the measured position and to the previous
//! command.

pub mod plant;
pub mod scenario;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use plant::{inverse_dynamics, Plant, PlantConfig, PlantReading};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Active,
    Compliant,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Active => "active",
            Mode::Compliant => "compliant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerGains {
    /// Compliance threshold τ^th (Nm).
    pub tau_th: f64,
    pub eta_a_min: f64,
    pub eta_a_max: f64,
    /// Error at which the active gain reaches `eta_a_min` (rad).
    pub e_max: f64,
    /// Compliant proportional gain (rad/Nm).
    pub eta_p: f64,
    /// Compliant integral gain (rad/(Nm·tick)).
    pub eta_i: f64,
    /// Soft-impedance gain toward θ^net.
    pub eta_n: f64,
    /// Saturation of the impedance error (rad).
    pub s_max: f64,
    /// Per-tick target change bound (rad).
    pub delta_max: f64,
    /// Bound on the integral accumulator (Nm·tick).
    pub integral_limit: f64,
    /// Exit threshold as a fraction of τ^th.
    pub rho: f64,
    /// Consecutive quiet ticks needed to leave compliance.
    pub n_hold: u32,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            tau_th: 0.8,
            eta_a_min: 0.2,
            eta_a_max: 1.0,
            e_max: 0.5,
            eta_p: 0.05,
            eta_i: 0.01,
            eta_n: 0.3,
            s_max: 0.05,
            delta_max: 0.1,
            integral_limit: 10.0,
            rho: 0.5,
            n_hold: 8,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            self.tau_th,
            self.eta_a_min,
            self.eta_a_max,
            self.eta_p,
            self.eta_i,
            self.eta_n,
            self.s_max,
            self.integral_limit,
            self.rho,
        ];
        if nonneg.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::Config("controller gains must be finite and ≥ 0".into()));
        }
        if self.eta_a_min > self.eta_a_max {
            return Err(Error::Config("eta_a_min must not exceed eta_a_max".into()));
        }
        if !(self.delta_max > 0.0 && self.e_max > 0.0) {
            return Err(Error::Config("delta_max and e_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    /// Measured position θ̂.
    pub theta: f64,
    pub theta_net: f64,
    /// Measured torque τ̂.
    pub tau: f64,
    /// Inverse-dynamics torque τ^act.
    pub tau_act: f64,
    pub tau_ext: f64,
    pub mode: Mode,
    pub integral: f64,
    /// Quiet ticks counted toward leaving compliance.
    pub hold: u32,
    /// Last commanded target.
    pub command: f64,
}

impl JointState {
    pub fn at_rest(theta: f64) -> Self {
        Self {
            theta,
            theta_net: theta,
            tau: 0.0,
            tau_act: 0.0,
            tau_ext: 0.0,
            mode: Mode::Active,
            integral: 0.0,
            hold: 0,
            command: theta,
        }
    }
}

/// `τ̂^ext = τ̂ − τ^act`
pub fn estimate_external(tau: f64, tau_act: f64) -> f64 {
    tau - tau_act
}

/// Next mode and quiet-tick count. The integral is reset by the caller on exit.
pub fn select_mode(joint: &JointState, gains: &ControllerGains) -> (Mode, u32) {
    let mag = joint.tau_ext.abs();
    if mag > gains.tau_th {
        return (Mode::Compliant, 0);
    }
    match joint.mode {
        Mode::Active => (Mode::Active, 0),
        Mode::Compliant => {
            if mag < gains.rho * gains.tau_th {
                let hold = joint.hold + 1;
                if hold >= gains.n_hold {
                    (Mode::Active, 0)
                } else {
                    (Mode::Compliant, hold)
                }
            } else {
                (Mode::Compliant, 0)
            }
        }
    }
}

/// Cosine transition from `eta_a_max` at zero error to `eta_a_min` at `e_max`.
pub fn active_gain(error: f64, gains: &ControllerGains) -> f64 {
    let e = error.abs().min(gains.e_max);
    gains.eta_a_min + (gains.eta_a_max - gains.eta_a_min) * 0.5 * (1.0 + (PI * e / gains.e_max).cos())
}

/// Active tracking: `θ̂ + clamp(η^a·(θ^net − θ̂), ±Δ_max)`.
pub fn active_target(theta_net: f64, theta: f64, gains: &ControllerGains) -> f64 {
    let e = theta_net - theta;
    theta + (active_gain(e, gains) * e).clamp(-gains.delta_max, gains.delta_max)
}

/// Compliant following. `joint.integral` must already include this tick's torque.
pub fn compliant_target(joint: &JointState, gains: &ControllerGains) -> f64 {
    let integral = (gains.eta_i * joint.integral).clamp(-gains.eta_i * gains.integral_limit, gains.eta_i * gains.integral_limit);
    let follow = gains.eta_p * joint.tau_ext + integral;
    let bias = gains.eta_n * (joint.theta_net - joint.theta).clamp(-gains.s_max, gains.s_max);
    joint.theta + (follow + bias).clamp(-gains.delta_max, gains.delta_max)
}

/// Per-joint hybrid controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridController {
    pub gains: ControllerGains,
    pub joints: Vec<JointState>,
}

impl HybridController {
    pub fn new(gains: ControllerGains, posture: &[f64]) -> Result<Self> {
        gains.validate()?;
        Ok(Self {
            gains,
            joints: posture.iter().map(|&p| JointState::at_rest(p)).collect(),
        })
    }

    pub fn modes(&self) -> Vec<Mode> {
        self.joints.iter().map(|j| j.mode).collect()
    }

    /// One fast tick: update estimates and modes, return the commanded targets.
    pub fn tick(&mut self, theta: &[f64], tau: &[f64], tau_act: &[f64], theta_net: &[f64]) -> Result<Vec<f64>> {
        let n = self.joints.len();
        if theta.len() != n || tau.len() != n || tau_act.len() != n || theta_net.len() != n {
            return Err(Error::Shape("controller inputs differ in width".into()));
        }
        let g = &self.gains;
        let mut out = Vec::with_capacity(n);
        for (j, js) in self.joints.iter_mut().enumerate() {
            js.theta = theta[j];
            js.tau = tau[j];
            js.tau_act = tau_act[j];
            js.theta_net = theta_net[j];
            js.tau_ext = estimate_external(tau[j], tau_act[j]);
            let (mode, hold) = select_mode(js, g);
            if js.mode == Mode::Compliant && mode == Mode::Active {
                js.integral = 0.0;
            }
            js.mode = mode;
            js.hold = hold;
            let target = match mode {
                Mode::Active => active_target(js.theta_net, js.theta, g),
                Mode::Compliant => {
                    js.integral = (js.integral + js.tau_ext).clamp(-g.integral_limit, g.integral_limit);
                    compliant_target(js, g)
                }
            };
            // Rate limit against the previous command as well.
            let cmd = target.clamp(js.command - g.delta_max, js.command + g.delta_max);
            js.command = cmd;
            out.push(cmd);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanSurrogate {
    /// Engagement gain κ (Nm/rad).
    pub gain: f64,
    /// Per-joint safety bound (Nm).
    pub bound: f64,
}

impl Default for HumanSurrogate {
    fn default() -> Self {
        Self { gain: 1.45, bound: 3.0 }
    }
}

impl HumanSurrogate {
    /// `clamp(κ·(θ_script − θ̂), ±bound)` per joint.
    pub fn torques(&self, script: &[f64], theta: &[f64]) -> Vec<f64> {
        script
            .iter()
            .zip(theta)
            .map(|(s, t)| (self.gain * (s - t)).clamp(-self.bound, self.bound))
            .collect()
    }
}

/// Clamp a torque command to a safety bound.
pub fn clamp_torque(tau: f64, bound: f64) -> f64 {
    if tau.is_nan() {
        0.0
    } else {
        tau.clamp(-bound, bound)
    }
}
