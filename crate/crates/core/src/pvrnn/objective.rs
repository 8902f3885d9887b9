//! KL divergence between diagonal Gaussians and the KL-weighted lower bound.

use serde::{Deserialize, Serialize};

use super::rollout::Rollout;
use crate::encoding::EncodedSequence;
use crate::error::{Error, Result};

/// `Σ log(σᵖ/σ^q) + ((μᵖ−μ^q)² + (σ^q)²) / (2(σᵖ)²) − ½`, i.e. KL(q ‖ p).
pub fn kl_term(mu_p: &[f64], sigma_p: &[f64], mu_q: &[f64], sigma_q: &[f64]) -> Result<f64> {
    let n = mu_p.len();
    if sigma_p.len() != n || mu_q.len() != n || sigma_q.len() != n {
        return Err(Error::Shape("KL operands differ in length".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        let (sp, sq) = (sigma_p[i], sigma_q[i]);
        if !(sp > 0.0) || !(sq > 0.0) {
            return Err(Error::Domain(format!("σ must be positive (σp={sp}, σq={sq})")));
        }
        let dm = mu_p[i] - mu_q[i];
        total += (sp / sq).ln() + (dm * dm + sq * sq) / (2.0 * sp * sp) - 0.5;
    }
    Ok(total)
}

/// Terms of the lower bound for one rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Elbo {
    /// `Σ_t Σ_i Σ_k target · log x` (≤ 0).
    pub reconstruction: f64,
    /// `Σ_t KL(q ‖ p)` over all layers (≥ 0).
    pub regulation: f64,
    /// `reconstruction − w · regulation`; the quantity being maximized.
    pub total: f64,
}

impl Elbo {
    pub fn zero() -> Self {
        Self {
            reconstruction: 0.0,
            regulation: 0.0,
            total: 0.0,
        }
    }

    pub fn accumulate(&mut self, other: &Elbo) {
        self.reconstruction += other.reconstruction;
        self.regulation += other.regulation;
        self.total += other.total;
    }
}

/// Guard for `log x` when a bin's probability underflows.
const LOG_FLOOR: f64 = 1e-300;

pub fn reconstruction_term(x: &[f64], target: &[f64]) -> f64 {
    x.iter()
        .zip(target)
        .map(|(&p, &t)| if t > 0.0 { t * p.max(LOG_FLOOR).ln() } else { 0.0 })
        .sum()
}

/// Largest attainable reconstruction: `Σ target · log target`.
pub fn reconstruction_max(targets: &EncodedSequence) -> f64 {
    targets
        .data
        .iter()
        .map(|&t| if t > 0.0 { t * t.ln() } else { 0.0 })
        .sum()
}

pub fn elbo(rollout: &Rollout, targets: &EncodedSequence, w: f64) -> Result<Elbo> {
    if rollout.len() != targets.steps() {
        return Err(Error::Shape(format!(
            "rollout has {} steps, targets have {}",
            rollout.len(),
            targets.steps()
        )));
    }
    let mut rec = 0.0;
    let mut reg = 0.0;
    for (t, step) in rollout.steps.iter().enumerate() {
        let target = targets.row(t);
        let target = target.as_slice().expect("contiguous target row");
        if target.len() != step.x.len() {
            return Err(Error::Shape("target width differs from output width".into()));
        }
        rec += reconstruction_term(&step.x, target);
        for l in &step.layers {
            if let Some(q) = &l.posterior {
                reg += kl_term(&l.prior.mu, &l.prior.sigma, &q.mu, &q.sigma)?;
            }
        }
    }
    Ok(Elbo {
        reconstruction: rec,
        regulation: reg,
        total: rec - w * reg,
    })
}
