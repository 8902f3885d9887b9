//! Error regression: online inference of the adaptive offsets over a sliding
//! window of recent evidence, with the network weights frozen.
//!
//! The window keeps the carry state just before its oldest step (`origin`),
//! one evidence row and one adaptive step per buffered tick, and an optional
//! queue of offsets for future ticks (used to seed an intention). When the
//! window is full the oldest step is committed with ε = 0 and folded into the
//! origin.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{EncodedSequence, SoftmaxCoding};
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerKind};
use crate::pvrnn::{
    bptt_grads, elbo, forward_step, posterior_rollout, AdaptiveStep, Carry, Elbo, GradScope, NetworkConfig,
    NetworkParams, Noise, StepState,
};
use crate::trainer::{adaptive_values_mut, flat_adaptive, INTERACTION_W};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionConfig {
    pub window: usize,
    pub inner_epochs: usize,
    pub optimizer: OptimizerKind,
    /// KL weight during inference.
    pub w: f64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            window: 20,
            inner_epochs: 28,
            optimizer: OptimizerKind::Plain { lr: 0.1 },
            w: INTERACTION_W,
        }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("regression window must be ≥ 1".into()));
        }
        if self.inner_epochs == 0 {
            return Err(Error::Config("inner_epochs must be ≥ 1".into()));
        }
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(Error::Config(format!("invalid KL weight {}", self.w)));
        }
        Ok(())
    }
}

/// Latent state at one tick, per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSnapshot {
    pub t: usize,
    pub d: Vec<Vec<f64>>,
    pub mu_p: Vec<Vec<f64>>,
    pub sigma_p: Vec<Vec<f64>>,
    pub mu_q: Vec<Vec<f64>>,
    pub sigma_q: Vec<Vec<f64>>,
}

impl LatentSnapshot {
    pub fn from_step(t: usize, s: &StepState) -> Self {
        let mut out = Self {
            t,
            d: Vec::new(),
            mu_p: Vec::new(),
            sigma_p: Vec::new(),
            mu_q: Vec::new(),
            sigma_q: Vec::new(),
        };
        for l in &s.layers {
            let q = l.posterior.as_ref().unwrap_or(&l.prior);
            out.d.push(l.d.clone());
            out.mu_p.push(l.prior.mu.clone());
            out.sigma_p.push(l.prior.sigma.clone());
            out.mu_q.push(q.mu.clone());
            out.sigma_q.push(q.sigma.clone());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionOutput {
    /// Predicted output distribution for the next tick, flattened per dimension.
    pub probs: Vec<f64>,
    /// Decoded prediction (θ^net).
    pub posture: Vec<f64>,
    /// Latent state at the newest evidence step after regression.
    pub snapshot: LatentSnapshot,
    /// Window objective at the last inner epoch.
    pub window_elbo: Elbo,
}

#[derive(Debug, Clone)]
pub struct RegressionWindow {
    config: RegressionConfig,
    net: NetworkConfig,
    origin: Carry,
    evidence: VecDeque<Vec<f64>>,
    a: Vec<AdaptiveStep>,
    pending: VecDeque<AdaptiveStep>,
    opt: Optimizer,
    rng: ChaCha8Rng,
    t: usize,
}

fn step_width(net: &NetworkConfig) -> usize {
    net.layers.iter().map(|l| 2 * l.z_units).sum()
}

impl RegressionWindow {
    pub fn new(config: RegressionConfig, net: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        net.validate()?;
        Ok(Self {
            opt: Optimizer::new(config.optimizer, 0),
            origin: Carry::zeros(net),
            net: net.clone(),
            config,
            evidence: VecDeque::new(),
            a: Vec::new(),
            pending: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            t: 0,
        })
    }

    pub fn config(&self) -> &RegressionConfig {
        &self.config
    }

    /// Number of buffered evidence steps.
    pub fn len(&self) -> usize {
        self.evidence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evidence.is_empty()
    }

    /// Evidence steps seen so far.
    pub fn ticks(&self) -> usize {
        self.t
    }

    pub fn adaptive(&self) -> &[AdaptiveStep] {
        &self.a
    }

    pub fn origin(&self) -> &Carry {
        &self.origin
    }

    /// Queue offsets for the next ticks (replaces any queued ones).
    pub fn seed_intent(&mut self, steps: &[AdaptiveStep]) -> Result<()> {
        let zero = AdaptiveStep::zeros(&self.net);
        for s in steps {
            let ok = s.mu.len() == zero.mu.len()
                && s.mu.iter().zip(&zero.mu).all(|(a, b)| a.len() == b.len())
                && s.sigma.iter().zip(&zero.sigma).all(|(a, b)| a.len() == b.len())
                && s.sigma.len() == zero.sigma.len();
            if !ok {
                return Err(Error::Shape("intent offsets do not match the network".into()));
            }
        }
        self.pending = steps.iter().cloned().collect();
        Ok(())
    }

    /// Start over from the zero state with a new noise stream.
    pub fn reset(&mut self, seed: u64) {
        self.origin = Carry::zeros(&self.net);
        self.evidence.clear();
        self.a.clear();
        self.pending.clear();
        self.opt = Optimizer::new(self.config.optimizer, 0);
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.t = 0;
    }

    /// Drop the oldest step if the window is full, committing it into the origin.
    pub fn slide_window(&mut self, params: &NetworkParams) -> Result<()> {
        if self.evidence.len() < self.config.window {
            return Ok(());
        }
        let zeros = Noise::zeros(&self.net, 1);
        let first = self.a.remove(0);
        let s = forward_step(params, &self.net, &self.origin, Some(&first), &zeros.steps[0])?;
        self.origin = s.carry();
        self.evidence.pop_front();
        self.opt.drop_front(step_width(&self.net));
        Ok(())
    }

    fn targets(&self) -> EncodedSequence {
        let width = self.net.output_width();
        let mut data = Array2::zeros((self.evidence.len(), width));
        for (mut row, e) in data.rows_mut().into_iter().zip(&self.evidence) {
            row.assign(&ndarray::ArrayView1::from(&e[..]));
        }
        EncodedSequence {
            dims: self.net.output_dims,
            bins: self.net.bins_per_dim,
            data,
        }
    }

    /// Append one encoded evidence row, regress the window and predict the next tick.
    pub fn regression_step(
        &mut self,
        params: &NetworkParams,
        coding: &SoftmaxCoding,
        evidence: &[f64],
    ) -> Result<RegressionOutput> {
        let width = self.net.output_width();
        if evidence.len() != width {
            return Err(Error::Shape(format!("evidence width {} != {width}", evidence.len())));
        }
        for (dim, chunk) in evidence.chunks(self.net.bins_per_dim).enumerate() {
            let s: f64 = chunk.iter().sum();
            if chunk.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > crate::encoding::PROB_SUM_TOL {
                return Err(Error::InvalidProbs(format!("sum {s}")).at(self.t, dim));
            }
        }
        self.slide_window(params)?;
        self.evidence.push_back(evidence.to_vec());
        let next = self.pending.pop_front().unwrap_or_else(|| AdaptiveStep::zeros(&self.net));
        self.a.push(next);
        self.opt.resize(self.a.len() * step_width(&self.net));

        let targets = self.targets();
        let mut last = Elbo::zero();
        for _ in 0..self.config.inner_epochs {
            let noise = Noise::sample(&self.net, self.a.len(), &mut self.rng);
            let r = posterior_rollout(params, &self.net, &self.origin, &self.a, &noise)?;
            last = elbo(&r, &targets, self.config.w)?;
            let g = bptt_grads(&r, &targets, self.config.w, params, &self.net, GradScope::AdaptiveOnly)?;
            let flat = flat_adaptive(&g.adaptive);
            self.opt.step(adaptive_values_mut(&mut self.a), &flat);
        }
        if !self.a.iter().all(AdaptiveStep::is_finite) {
            return Err(Error::Diverged { epoch: self.t });
        }

        let zeros = Noise::zeros(&self.net, self.a.len() + 1);
        let r = posterior_rollout(params, &self.net, &self.origin, &self.a, &zeros)?;
        let snapshot = LatentSnapshot::from_step(self.t, r.steps.last().expect("window is non-empty"));
        let pred = forward_step(params, &self.net, &r.final_carry(), self.pending.front(), &zeros.steps[0])?;
        let posture = coding.decode_posture(ndarray::ArrayView1::from(&pred.x[..]))?;
        self.t += 1;
        Ok(RegressionOutput {
            probs: pred.x,
            posture,
            snapshot,
            window_elbo: last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pvrnn::{generate_rollout, GenerationMode, LayerConfig};
    use rand::SeedableRng;

    fn setup() -> (NetworkConfig, NetworkParams, SoftmaxCoding) {
        let net = NetworkConfig {
            layers: vec![
                LayerConfig { d_units: 8, z_units: 2, timescale: 2.0 },
                LayerConfig { d_units: 4, z_units: 1, timescale: 6.0 },
            ],
            output_dims: 2,
            bins_per_dim: 5,
            meta_w: 0.0,
            seed: 11,
        };
        let params = NetworkParams::init(&net).unwrap();
        let coding = SoftmaxCoding::symmetric(2, -1.0, 1.0, 5, 10.0).unwrap();
        (net, params, coding)
    }

    fn small(window: usize, inner: usize) -> RegressionConfig {
        RegressionConfig { window, inner_epochs: inner, ..RegressionConfig::default() }
    }

    #[test]
    fn zero_inner_epochs_rejected() {
        let (net, ..) = setup();
        assert!(RegressionWindow::new(small(5, 0), &net, 0).is_err());
        assert!(RegressionWindow::new(small(0, 3), &net, 0).is_err());
    }

    #[test]
    fn one_inner_epoch_is_one_update() {
        let (net, params, coding) = setup();
        let mut w = RegressionWindow::new(small(5, 1), &net, 0).unwrap();
        let e = coding.encode_posture(&[0.2, -0.3]).unwrap();
        w.regression_step(&params, &coding, &e).unwrap();
        assert_eq!(w.opt.t, 1);
        w.regression_step(&params, &coding, &e).unwrap();
        assert_eq!(w.opt.t, 2);
    }

    #[test]
    fn parameters_stay_frozen() {
        let (net, params, coding) = setup();
        let before = params.clone();
        let mut w = RegressionWindow::new(small(4, 3), &net, 1).unwrap();
        for t in 0..10 {
            let e = coding.encode_posture(&[0.5 * (t as f64).sin(), 0.1]).unwrap();
            w.regression_step(&params, &coding, &e).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(w.len(), 4);
        assert_eq!(w.ticks(), 10);
    }

    #[test]
    fn slide_below_capacity_is_noop_and_preserves_overlap() {
        let (net, params, coding) = setup();
        let mut w = RegressionWindow::new(small(3, 2), &net, 2).unwrap();
        let e = coding.encode_posture(&[0.0, 0.4]).unwrap();
        w.regression_step(&params, &coding, &e).unwrap();
        let a_before = w.a.clone();
        let origin = w.origin.clone();
        w.slide_window(&params).unwrap();
        assert_eq!(w.a, a_before);
        assert_eq!(w.origin, origin);
        w.regression_step(&params, &coding, &e).unwrap();
        w.regression_step(&params, &coding, &e).unwrap();
        assert_eq!(w.len(), 3);
        let kept = w.a[1..].to_vec();
        w.slide_window(&params).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w.a, kept);
        assert_ne!(w.origin, origin);
    }

    #[test]
    fn malformed_evidence_rejected() {
        let (net, params, coding) = setup();
        let mut w = RegressionWindow::new(small(3, 1), &net, 0).unwrap();
        assert!(w.regression_step(&params, &coding, &[0.2; 3]).is_err());
        assert!(w.regression_step(&params, &coding, &[0.0; 10]).is_err());
        assert_eq!(w.len(), 0);
    }

    #[test]
    fn huge_kl_weight_pins_posterior_to_prior() {
        let (net, params, coding) = setup();
        let cfg = RegressionConfig { w: 1e6, optimizer: OptimizerKind::Plain { lr: 1e-9 }, ..small(5, 5) };
        let mut w = RegressionWindow::new(cfg, &net, 3).unwrap();
        for t in 0..8 {
            let e = coding.encode_posture(&[0.8, -0.8 + 0.1 * t as f64]).unwrap();
            w.regression_step(&params, &coding, &e).unwrap();
        }
        assert!(w.a.iter().all(|s| s.max_abs() < 1e-2));
    }

    #[test]
    fn self_generated_evidence_is_tracked() {
        // Feed the network's own mean generation back as evidence: the window
        // should keep predicting that generation.
        let (net, params, coding) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gen = generate_rollout(&params, &net, &Carry::zeros(&net), &[], 30, GenerationMode::Mean, &mut rng).unwrap();
        let mut w = RegressionWindow::new(small(10, 5), &net, 4).unwrap();
        let mut worst: f64 = 0.0;
        for t in 0..29 {
            let out = w.regression_step(&params, &coding, &gen.steps[t].x).unwrap();
            let truth = coding.decode_posture(ndarray::ArrayView1::from(&gen.steps[t + 1].x[..])).unwrap();
            for (p, q) in out.posture.iter().zip(&truth) {
                worst = worst.max((p - q).abs());
            }
        }
        assert!(worst < coding.bin_width(0), "drift {worst}");
    }
}
