//! Simulated arm: a first-order position servo per joint with an exact
//! inverse-dynamics model for torque prediction.
//!
//! Measured joint torque is `I·θ̈ + b·θ̇ + G·sin θ + τ_inj (+ noise)`, with
//! velocity and acceleration taken as backward differences of the position
//! history. The inverse-dynamics model evaluates the same expression without
//! the injected term, so the estimated external torque is exactly the
//! injected one when noise is off.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub rate_hz: f64,
    /// Servo time constant (s).
    pub servo_tc: f64,
    pub inertia: Vec<f64>,
    pub friction: Vec<f64>,
    /// Gravity torque amplitude `G` in `G·sin θ` (Nm).
    pub gravity: Vec<f64>,
    pub limits: Vec<(f64, f64)>,
    /// Std of Gaussian noise added to measured torque; 0 = deterministic.
    pub torque_noise: f64,
    pub seed: u64,
}

impl PlantConfig {
    pub fn uniform(dims: usize, limit: f64) -> Self {
        Self {
            rate_hz: 50.0,
            servo_tc: 0.02,
            inertia: vec![0.05; dims],
            friction: vec![0.1; dims],
            gravity: vec![0.5; dims],
            limits: vec![(-limit, limit); dims],
            torque_noise: 0.0,
            seed: 0,
        }
    }

    pub fn dims(&self) -> usize {
        self.limits.len()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dims();
        if n == 0 {
            return Err(Error::Config("plant needs at least one joint".into()));
        }
        if self.inertia.len() != n || self.friction.len() != n || self.gravity.len() != n {
            return Err(Error::Config("plant parameter vectors differ in length".into()));
        }
        if !(self.rate_hz > 0.0 && self.servo_tc > 0.0) {
            return Err(Error::Config("plant rate and servo time constant must be positive".into()));
        }
        if self.inertia.iter().chain(&self.friction).any(|v| !(*v > 0.0)) {
            return Err(Error::Config("inertia and friction must be positive".into()));
        }
        if self.limits.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Config("joint limits must satisfy lo < hi".into()));
        }
        if !(self.torque_noise >= 0.0) {
            return Err(Error::Config("torque noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// One tick of plant output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantReading {
    pub theta: Vec<f64>,
    pub tau: Vec<f64>,
    /// Joints whose position hit a limit this tick.
    pub limited: Vec<bool>,
}

/// Rigid-body-free torque model shared by the plant and the estimator.
pub fn model_torque(config: &PlantConfig, j: usize, prev2: f64, prev: f64, now: f64) -> f64 {
    let dt = config.dt();
    let vel = (now - prev) / dt;
    let acc = (now - 2.0 * prev + prev2) / (dt * dt);
    config.inertia[j] * acc + config.friction[j] * vel + config.gravity[j] * now.sin()
}

/// Predicted torque from the last three positions (oldest first).
pub fn inverse_dynamics(config: &PlantConfig, history: &[Vec<f64>]) -> Result<Vec<f64>> {
    if history.len() < 2 {
        return Err(Error::Config("inverse dynamics needs at least 2 history samples".into()));
    }
    let n = history.len();
    let now = &history[n - 1];
    let prev = &history[n - 2];
    // With only two samples the acceleration uses a repeated oldest sample.
    let prev2 = if n >= 3 { &history[n - 3] } else { prev };
    if now.len() != config.dims() || prev.len() != config.dims() || prev2.len() != config.dims() {
        return Err(Error::Shape("history width differs from plant".into()));
    }
    Ok((0..config.dims())
        .map(|j| model_torque(config, j, prev2[j], prev[j], now[j]))
        .collect())
}

#[derive(Debug, Clone)]
pub struct Plant {
    config: PlantConfig,
    history: VecDeque<Vec<f64>>,
    tau: Vec<f64>,
    noise: Option<(ChaCha8Rng, Normal<f64>)>,
}

impl Plant {
    /// Start at rest at `posture` (clamped to the limits).
    pub fn new(config: PlantConfig, posture: &[f64]) -> Result<Self> {
        config.validate()?;
        if posture.len() != config.dims() {
            return Err(Error::Shape(format!("posture has {} joints, plant {}", posture.len(), config.dims())));
        }
        let start: Vec<f64> = posture
            .iter()
            .zip(&config.limits)
            .map(|(p, (lo, hi))| p.clamp(*lo, *hi))
            .collect();
        let tau = start.iter().zip(&config.gravity).map(|(p, g)| g * p.sin()).collect();
        let noise = if config.torque_noise > 0.0 {
            let n = Normal::new(0.0, config.torque_noise).map_err(|e| Error::Config(e.to_string()))?;
            Some((ChaCha8Rng::seed_from_u64(config.seed), n))
        } else {
            None
        };
        Ok(Self {
            history: VecDeque::from(vec![start.clone(), start.clone(), start]),
            config,
            tau,
            noise,
        })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn theta(&self) -> &[f64] {
        self.history.back().expect("history never empty")
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    /// Oldest first, three samples.
    pub fn history(&self) -> Vec<Vec<f64>> {
        self.history.iter().cloned().collect()
    }

    /// Advance one tick toward `targets` with torques `injected` acting on the joints.
    pub fn plant_step(&mut self, targets: &[f64], injected: &[f64]) -> Result<PlantReading> {
        let n = self.config.dims();
        if targets.len() != n || injected.len() != n {
            return Err(Error::Shape("targets/injected width differs from plant".into()));
        }
        let k = 1.0 - (-self.config.dt() / self.config.servo_tc).exp();
        let cur = self.theta().to_vec();
        let mut next = Vec::with_capacity(n);
        let mut limited = Vec::with_capacity(n);
        for j in 0..n {
            let (lo, hi) = self.config.limits[j];
            let target = targets[j].clamp(lo, hi);
            let raw = cur[j] + k * (target - cur[j]);
            let clamped = raw.clamp(lo, hi);
            limited.push(targets[j] != target || raw != clamped);
            next.push(clamped);
        }
        self.history.pop_front();
        self.history.push_back(next.clone());
        let h = &self.history;
        self.tau = (0..n)
            .map(|j| {
                let mut t = model_torque(&self.config, j, h[0][j], h[1][j], h[2][j]) + injected[j];
                if let Some((rng, dist)) = self.noise.as_mut() {
                    t += dist.sample(rng);
                }
                t
            })
            .collect();
        Ok(PlantReading {
            theta: next,
            tau: self.tau.clone(),
            limited,
        })
    }
}
