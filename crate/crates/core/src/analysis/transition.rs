//! Offline error regression: a network seeded with one intention is fed a
//! recorded primitive as evidence, and the observer labels its predictions.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{convergence_tick, pca::Pca2Result, tail_fraction, ObserverNet};
use crate::checkpoint::Checkpoint;
use crate::encoding::{default_joint_names, Trajectory};
use crate::error::{Error, Result};
use crate::regression::{RegressionConfig, RegressionWindow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransitionConfig {
    /// The KL weight is taken from the checkpoint's profile.
    pub regression: RegressionConfig,
    /// Network ticks; the evidence loops when shorter.
    pub steps: usize,
    /// Convergence: at least `frac` of the last `window` labels on the evidence.
    pub window: usize,
    pub frac: f64,
}

impl Default for TransitionConfig {
    fn default() -> Self {
        Self { regression: RegressionConfig::default(), steps: 180, window: 50, frac: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRun {
    pub intent: usize,
    pub evidence: usize,
    /// Decoded prediction for the next tick, per tick.
    pub predictions: Vec<Vec<f64>>,
    /// Observer label of each prediction.
    pub labels: Vec<usize>,
    /// Squared error of each prediction against the next evidence posture, mean over joints.
    pub mse: Vec<f64>,
    /// Top-layer d at the newest evidence step.
    pub latents: Vec<Vec<f64>>,
    /// First tick at which the trailing window meets the convergence share.
    pub converged_at: Option<usize>,
    /// Share of the last `window` labels on the evidence primitive.
    pub tail: f64,
}

impl TransitionRun {
    pub fn converged(&self, frac: f64) -> bool {
        self.tail >= frac
    }

    /// Predictions as a trajectory at the network rate, within the coded range.
    pub fn prediction_trajectory(&self, ck: &Checkpoint) -> Result<Trajectory> {
        let dims = ck.config.output_dims;
        let values = Array2::from_shape_fn((self.predictions.len(), dims), |(t, j)| self.predictions[t][j]);
        let limits = (0..dims).map(|j| ck.coding.range(j)).collect();
        let names = ck.dataset.first().map(|t| t.joint_names.clone()).unwrap_or_else(|| default_joint_names(dims));
        Trajectory::new(crate::NETWORK_RATE_HZ, names, limits, values)
    }

    /// `tick,label,mse` per tick, plus the projection when a frame is given.
    pub fn write_csv<W: Write>(&self, labels: &[String], pca: Option<&Pca2Result>, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let proj = pca.map(|p| p.project_all(&self.latents)).transpose()?;
        let mut header = vec!["tick", "label", "mse"];
        if proj.is_some() {
            header.extend(["pc1", "pc2"]);
        }
        w.write_record(&header)?;
        for t in 0..self.labels.len() {
            let mut row = vec![t.to_string(), labels[self.labels[t]].clone(), self.mse[t].to_string()];
            if let Some(p) = &proj {
                row.push(p[t][0].to_string());
                row.push(p[t][1].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn looped(traj: &Trajectory, n: usize) -> Vec<f64> {
    traj.posture(n % traj.steps()).to_vec()
}

/// Seed the window with the trained offsets of `intent` and regress against
/// primitive `evidence` of the checkpoint's dataset.
pub fn run_transition(
    ck: &Checkpoint,
    observer: &ObserverNet,
    config: &TransitionConfig,
    intent: usize,
    evidence: usize,
    seed: u64,
) -> Result<TransitionRun> {
    let traj = ck
        .dataset
        .get(evidence)
        .ok_or_else(|| Error::Config(format!("no primitive with index {evidence}")))?;
    let mut run = regress_offline(ck, observer, config, intent, traj, seed)?;
    run.evidence = evidence;
    run.converged_at = convergence_tick(&run.labels, evidence, config.window, config.frac);
    run.tail = tail_fraction(&run.labels, evidence, config.window);
    Ok(run)
}

/// Regress against an arbitrary evidence trajectory. Convergence fields are
/// left empty since the evidence has no label.
pub fn regress_offline(
    ck: &Checkpoint,
    observer: &ObserverNet,
    config: &TransitionConfig,
    intent: usize,
    evidence: &Trajectory,
    seed: u64,
) -> Result<TransitionRun> {
    if intent >= ck.adaptive.len() {
        return Err(Error::Config(format!("no primitive with index {intent}")));
    }
    if evidence.dims() != ck.config.output_dims {
        return Err(Error::Shape(format!(
            "evidence has {} joints, network {}",
            evidence.dims(),
            ck.config.output_dims
        )));
    }
    if config.steps == 0 {
        return Err(Error::Config("transition needs at least one step".into()));
    }
    let mut reg = config.regression.clone();
    reg.w = ck.profile.interact_w;
    let mut window = RegressionWindow::new(reg, &ck.config, seed)?;
    let steps = &ck.adaptive[intent].steps;
    window.seed_intent(&steps[..config.regression.window.min(steps.len())])?;
    let top = ck.config.layers.len() - 1;
    let mut run = TransitionRun {
        intent,
        evidence: usize::MAX,
        predictions: Vec::with_capacity(config.steps),
        labels: Vec::with_capacity(config.steps),
        mse: Vec::with_capacity(config.steps),
        latents: Vec::with_capacity(config.steps),
        converged_at: None,
        tail: 0.0,
    };
    for n in 0..config.steps {
        let y = ck.coding.encode_posture(&looped(evidence, n))?;
        let out = window.regression_step(&ck.params, &ck.coding, &y)?;
        let next = looped(evidence, n + 1);
        let mse = out.posture.iter().zip(&next).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / next.len() as f64;
        run.labels.push(observer.classify_posture(&out.posture)?.label);
        run.mse.push(mse);
        run.latents.push(out.snapshot.d[top].clone());
        run.predictions.push(out.posture);
    }
    Ok(run)
}

/// Project a run's latents into a generation-fitted PCA frame.
pub fn project(pca: &Pca2Result, latents: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    pca.project_all(latents)
}
