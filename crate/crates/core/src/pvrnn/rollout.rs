//! Forward dynamics: MTRNN recurrence, prior/posterior heads, reparameterized
//! sampling and the softmax readout.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::network::{Carry, LayerParams, NetworkConfig, NetworkParams, LOG_SIGMA_MAX, LOG_SIGMA_MIN, SIGMA_FLOOR};
use crate::error::{Error, Result};
use crate::linalg::{gemv_acc, softmax_inplace};

/// Per-layer adaptive offsets `a_μ`, `a_σ` for one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveStep {
    pub mu: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
}

impl AdaptiveStep {
    pub fn zeros(config: &NetworkConfig) -> Self {
        let z: Vec<Vec<f64>> = config.layers.iter().map(|l| vec![0.0; l.z_units]).collect();
        Self { mu: z.clone(), sigma: z }
    }

    pub fn is_finite(&self) -> bool {
        self.mu.iter().chain(&self.sigma).flatten().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.mu.iter().chain(&self.sigma).flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Adaptive offsets over a whole sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSequence {
    pub steps: Vec<AdaptiveStep>,
}

impl AdaptiveSequence {
    pub fn zeros(config: &NetworkConfig, len: usize) -> Self {
        Self {
            steps: vec![AdaptiveStep::zeros(config); len],
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Every value in a fixed order (step, μ before σ, layer, unit).
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps
            .iter()
            .flat_map(|s| s.mu.iter().chain(&s.sigma).flatten().copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.steps.iter_mut().flat_map(|s| {
            let AdaptiveStep { mu, sigma } = s;
            mu.iter_mut().chain(sigma.iter_mut()).flatten()
        })
    }
}

/// Standard-normal draws, indexed `[step][layer][unit]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub steps: Vec<Vec<Vec<f64>>>,
}

impl Noise {
    pub fn zeros(config: &NetworkConfig, len: usize) -> Self {
        let step: Vec<Vec<f64>> = config.layers.iter().map(|l| vec![0.0; l.z_units]).collect();
        Self {
            steps: vec![step; len],
        }
    }

    pub fn sample<R: Rng>(config: &NetworkConfig, len: usize, rng: &mut R) -> Self {
        let steps = (0..len)
            .map(|_| {
                config
                    .layers
                    .iter()
                    .map(|l| (0..l.z_units).map(|_| rng.sample(StandardNormal)).collect())
                    .collect()
            })
            .collect();
        Self { steps }
    }
}

/// Diagonal Gaussian produced by a prior or posterior head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Pre-clamp `log σ`; the clamp blocks gradients outside its range.
    pub log_sigma_raw: Vec<f64>,
}

impl Gaussian {
    fn from_pre(pre_mu: Vec<f64>, log_sigma_raw: Vec<f64>) -> Self {
        let mu = pre_mu.into_iter().map(f64::tanh).collect();
        let sigma = log_sigma_raw
            .iter()
            .map(|&l| l.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX).exp().max(SIGMA_FLOOR))
            .collect();
        Self {
            mu,
            sigma,
            log_sigma_raw,
        }
    }

    pub(crate) fn log_sigma_active(&self, i: usize) -> bool {
        let l = self.log_sigma_raw[i];
        (LOG_SIGMA_MIN..=LOG_SIGMA_MAX).contains(&l)
    }
}

/// Everything computed for one layer at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    pub u: Vec<f64>,
    pub h: Vec<f64>,
    pub d: Vec<f64>,
    pub z: Vec<f64>,
    pub prior: Gaussian,
    /// Absent on steps driven by the prior alone.
    pub posterior: Option<Gaussian>,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepState {
    pub layers: Vec<LayerState>,
    /// Flat softmax output, `output_dims * bins` entries.
    pub x: Vec<f64>,
}

impl StepState {
    pub fn carry(&self) -> Carry {
        Carry {
            h: self.layers.iter().map(|l| l.h.clone()).collect(),
            d: self.layers.iter().map(|l| l.d.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub init: Carry,
    pub steps: Vec<StepState>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Deterministic state entering step `t`.
    pub fn d_prev(&self, t: usize, layer: usize) -> &[f64] {
        if t == 0 {
            &self.init.d[layer]
        } else {
            &self.steps[t - 1].layers[layer].d
        }
    }

    pub fn final_carry(&self) -> Carry {
        self.steps.last().map_or_else(|| self.init.clone(), StepState::carry)
    }
}

/// `μᵖ = tanh(W_μ d + b_μᵖ)`, `log σᵖ = W_σ d + b_σᵖ`.
pub fn prior_params(d_prev: &[f64], layer: &LayerParams) -> Result<Gaussian> {
    if d_prev.len() != layer.w_mu.ncols() {
        return Err(Error::Shape(format!(
            "prior head expects {} inputs, got {}",
            layer.w_mu.ncols(),
            d_prev.len()
        )));
    }
    let mut pre_mu = layer.b_mu_prior.to_vec();
    gemv_acc(&layer.w_mu, d_prev, &mut pre_mu);
    let mut ls = layer.b_sigma_prior.to_vec();
    gemv_acc(&layer.w_sigma, d_prev, &mut ls);
    Ok(Gaussian::from_pre(pre_mu, ls))
}

/// Posterior head: the prior's weights with posterior biases plus the adaptive offsets.
pub fn posterior_params(d_prev: &[f64], a_mu: &[f64], a_sigma: &[f64], layer: &LayerParams) -> Result<Gaussian> {
    let z = layer.w_mu.nrows();
    if d_prev.len() != layer.w_mu.ncols() || a_mu.len() != z || a_sigma.len() != z {
        return Err(Error::Shape(format!(
            "posterior head expects d={} and adaptive terms of length {z}",
            layer.w_mu.ncols()
        )));
    }
    let mut pre_mu = layer.b_mu_post.to_vec();
    gemv_acc(&layer.w_mu, d_prev, &mut pre_mu);
    for (p, a) in pre_mu.iter_mut().zip(a_mu) {
        *p += a;
    }
    let mut ls = layer.b_sigma_post.to_vec();
    gemv_acc(&layer.w_sigma, d_prev, &mut ls);
    for (p, a) in ls.iter_mut().zip(a_sigma) {
        *p += a;
    }
    Ok(Gaussian::from_pre(pre_mu, ls))
}

/// `z = μ + σ·ε`.
pub fn sample_z(mu: &[f64], sigma: &[f64], eps: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(sigma)
        .zip(eps)
        .map(|((m, s), e)| m + s.max(SIGMA_FLOOR) * e)
        .collect()
}

/// One leaky-integrator update of every layer. Returns `(u, h, d)` per layer.
pub fn mtrnn_step(
    prev: &Carry,
    z: &[Vec<f64>],
    params: &NetworkParams,
    config: &NetworkConfig,
) -> Result<Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>> {
    let n = config.layers.len();
    if prev.d.len() != n || prev.h.len() != n || z.len() != n {
        return Err(Error::Shape(format!("expected state for {n} layers")));
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let lc = config.layers[k];
        let lp = &params.layers[k];
        if prev.d[k].len() != lc.d_units || prev.h[k].len() != lc.d_units || z[k].len() != lc.z_units {
            return Err(Error::Shape(format!("layer {k}: state/sample size mismatch")));
        }
        let mut u = vec![0.0; lc.d_units];
        gemv_acc(&lp.w_dd, &prev.d[k], &mut u);
        if let Some(w) = &lp.w_below {
            gemv_acc(w, &prev.d[k - 1], &mut u);
        }
        if let Some(w) = &lp.w_above {
            gemv_acc(w, &prev.d[k + 1], &mut u);
        }
        gemv_acc(&lp.w_zd, &z[k], &mut u);
        let inv = 1.0 / lc.timescale;
        let h: Vec<f64> = prev.h[k]
            .iter()
            .zip(&u)
            .map(|(hp, ui)| (1.0 - inv) * hp + inv * ui)
            .collect();
        let d = h.iter().map(|v| v.tanh()).collect();
        out.push((u, h, d));
    }
    Ok(out)
}

/// Softmax readout from the lowest layer's d. No latent connection.
pub fn output_step(d_low: &[f64], params: &NetworkParams, config: &NetworkConfig) -> Vec<f64> {
    let mut x = params.b_out.to_vec();
    gemv_acc(&params.w_out, d_low, &mut x);
    for chunk in x.chunks_exact_mut(config.bins_per_dim) {
        softmax_inplace(chunk);
    }
    x
}

/// One full network step. `adaptive = None` draws z from the prior.
pub fn forward_step(
    params: &NetworkParams,
    config: &NetworkConfig,
    prev: &Carry,
    adaptive: Option<&AdaptiveStep>,
    eps: &[Vec<f64>],
) -> Result<StepState> {
    let n = config.layers.len();
    if eps.len() != n {
        return Err(Error::Shape(format!("noise for {} layers, network has {n}", eps.len())));
    }
    let mut heads = Vec::with_capacity(n);
    let mut zs = Vec::with_capacity(n);
    for k in 0..n {
        let lp = &params.layers[k];
        let prior = prior_params(&prev.d[k], lp)?;
        let posterior = match adaptive {
            Some(a) => {
                let (am, asg) = a
                    .mu
                    .get(k)
                    .zip(a.sigma.get(k))
                    .ok_or_else(|| Error::Shape(format!("missing adaptive term for layer {k}")))?;
                Some(posterior_params(&prev.d[k], am, asg, lp)?)
            }
            None => None,
        };
        let src = posterior.as_ref().unwrap_or(&prior);
        if eps[k].len() != src.mu.len() {
            return Err(Error::Shape(format!("layer {k}: noise length mismatch")));
        }
        zs.push(sample_z(&src.mu, &src.sigma, &eps[k]));
        heads.push((prior, posterior));
    }
    let dyn_states = mtrnn_step(prev, &zs, params, config)?;
    let x = output_step(&dyn_states[0].2, params, config);
    let layers = dyn_states
        .into_iter()
        .zip(heads)
        .zip(zs)
        .zip(eps)
        .map(|((((u, h, d), (prior, posterior)), z), e)| LayerState {
            u,
            h,
            d,
            z,
            prior,
            posterior,
            eps: e.clone(),
        })
        .collect();
    Ok(StepState { layers, x })
}

/// Posterior-driven rollout from `init` over `adaptive.len()` steps.
pub fn posterior_rollout(
    params: &NetworkParams,
    config: &NetworkConfig,
    init: &Carry,
    adaptive: &[AdaptiveStep],
    noise: &Noise,
) -> Result<Rollout> {
    if noise.steps.len() < adaptive.len() {
        return Err(Error::Shape("fewer noise steps than adaptive steps".into()));
    }
    let mut steps = Vec::with_capacity(adaptive.len());
    let mut carry = init.clone();
    for (a, eps) in adaptive.iter().zip(&noise.steps) {
        let s = forward_step(params, config, &carry, Some(a), eps)?;
        carry = s.carry();
        steps.push(s);
    }
    Ok(Rollout {
        init: init.clone(),
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerationMode {
    /// ε = 0 everywhere.
    Mean,
    /// ε ~ N(0, 1).
    Sampled,
}

/// Open-loop generation. The first `lead.len()` steps use the posterior with
/// the given offsets (this is how a specific learned pattern is selected);
/// the rest are driven by the prior.
pub fn generate_rollout<R: Rng>(
    params: &NetworkParams,
    config: &NetworkConfig,
    init: &Carry,
    lead: &[AdaptiveStep],
    steps: usize,
    mode: GenerationMode,
    rng: &mut R,
) -> Result<Rollout> {
    if steps < 1 {
        return Err(Error::Config("generation length must be ≥ 1".into()));
    }
    let noise = match mode {
        GenerationMode::Mean => Noise::zeros(config, steps),
        GenerationMode::Sampled => Noise::sample(config, steps, rng),
    };
    let mut out = Vec::with_capacity(steps);
    let mut carry = init.clone();
    for (t, eps) in noise.steps.iter().enumerate() {
        let s = forward_step(params, config, &carry, lead.get(t), eps)?;
        carry = s.carry();
        out.push(s);
    }
    Ok(Rollout {
        init: init.clone(),
        steps: out,
    })
}
