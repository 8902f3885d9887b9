//! Post-hoc analysis: primitive observer, latent PCA, and the metrics behind
//! the training, generation, inference and protocol tables.

pub mod criteria;
pub mod observer;
pub mod pca;
pub mod transition;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::encoding::Trajectory;
use crate::error::{Error, Result};
use crate::pvrnn::{generate, reconstruction_max, Carry, GenerationMode};
use crate::trainer::EpochLog;

pub use observer::{
    argmax, fit_observer, split_by_steps, train_observer, Classification, LabeledPostures, ObserverConfig, ObserverNet,
    ObserverReport,
};
pub use criteria::Check;
pub use pca::{pca2, Pca2Result};
pub use transition::{regress_offline, run_transition, TransitionConfig, TransitionRun};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMse {
    pub mode: GenerationMode,
    /// Mean over primitives (and draws) at each step.
    pub per_step: Vec<f64>,
    pub mean: f64,
}

/// Per-step MSE of open-loop generation against each training sequence.
///
/// Each primitive is selected by its trained offsets at the first step; the
/// remaining steps are prior-driven. Sampled mode averages `draws` runs.
pub fn generation_mse(ck: &Checkpoint, mode: GenerationMode, draws: usize, seed: u64) -> Result<GenerationMse> {
    let draws = match mode {
        GenerationMode::Mean => 1,
        GenerationMode::Sampled => draws.max(1),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = ck.dataset.iter().map(|t| t.steps()).max().unwrap_or(0);
    let mut per_step = vec![0.0; steps];
    let mut counts = vec![0usize; steps];
    let init = Carry::zeros(&ck.config);
    for (i, reference) in ck.dataset.iter().enumerate() {
        let lead = &ck.adaptive[i].steps[..1.min(ck.adaptive[i].len())];
        for _ in 0..draws {
            let (_, gen) = generate(
                &ck.params,
                &ck.config,
                &ck.coding,
                &init,
                lead,
                reference.steps(),
                mode,
                &mut rng,
            )?;
            if gen.steps() != reference.steps() || gen.dims() != reference.dims() {
                return Err(Error::Shape("generation and reference differ in length".into()));
            }
            for t in 0..reference.steps() {
                let mse = gen
                    .values
                    .row(t)
                    .iter()
                    .zip(reference.values.row(t))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    / reference.dims() as f64;
                per_step[t] += mse;
                counts[t] += 1;
            }
        }
    }
    for (v, c) in per_step.iter_mut().zip(&counts) {
        *v /= (*c).max(1) as f64;
    }
    let mean = per_step.iter().sum::<f64>() / per_step.len().max(1) as f64;
    Ok(GenerationMse { mode, per_step, mean })
}

/// Open-loop generation of every primitive, each selected by its trained
/// first-step offsets.
pub fn generate_primitives(ck: &Checkpoint, mode: GenerationMode, seed: u64) -> Result<Vec<Trajectory>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Carry::zeros(&ck.config);
    ck.dataset
        .iter()
        .enumerate()
        .map(|(i, reference)| {
            let lead = &ck.adaptive[i].steps[..1.min(ck.adaptive[i].len())];
            let (_, traj) =
                generate(&ck.params, &ck.config, &ck.coding, &init, lead, reference.steps(), mode, &mut rng)?;
            Ok(traj)
        })
        .collect()
}

/// Layer `layer` d states of mean-mode generation of every primitive, concatenated.
pub fn generation_latents(ck: &Checkpoint, layer: usize) -> Result<Vec<Vec<f64>>> {
    if layer >= ck.config.layers.len() {
        return Err(Error::Config(format!("network has no layer {layer}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let init = Carry::zeros(&ck.config);
    let mut out = Vec::new();
    for (i, reference) in ck.dataset.iter().enumerate() {
        let lead = &ck.adaptive[i].steps[..1.min(ck.adaptive[i].len())];
        let (r, _) = generate(
            &ck.params,
            &ck.config,
            &ck.coding,
            &init,
            lead,
            reference.steps(),
            GenerationMode::Mean,
            &mut rng,
        )?;
        out.extend(r.steps.iter().map(|s| s.layers[layer].d.clone()));
    }
    Ok(out)
}

/// PCA of the top layer over generation, the frame used to compare inference runs.
pub fn latent_pca(ck: &Checkpoint) -> Result<Pca2Result> {
    pca2(&generation_latents(ck, ck.config.layers.len() - 1)?)
}

/// `Σ target·log target` over the checkpoint's dataset.
pub fn reconstruction_ceiling(ck: &Checkpoint) -> Result<f64> {
    ck.dataset.iter().map(|t| Ok(reconstruction_max(&ck.coding.encode_trajectory(t)?))).sum()
}

/// Summary of one training curve. The deficit is the reconstruction ceiling
/// minus the reconstruction term, smoothed by a trailing mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrend {
    pub final_deficit: f64,
    pub min_deficit: f64,
    pub final_regulation: f64,
}

impl TrainingTrend {
    /// Final deficit within `tol` (relative) of the curve's minimum.
    pub fn settled(&self, tol: f64) -> bool {
        self.final_deficit <= self.min_deficit * (1.0 + tol)
    }
}

pub fn training_trend(log: &[EpochLog], ceiling: f64, smooth: usize) -> Result<TrainingTrend> {
    if log.is_empty() {
        return Err(Error::Config("empty training log".into()));
    }
    let smooth = smooth.clamp(1, log.len());
    let deficit: Vec<f64> = log.iter().map(|e| ceiling - e.reconstruction).collect();
    let mut acc: f64 = deficit[..smooth].iter().sum();
    let mut min = acc / smooth as f64;
    for i in smooth..deficit.len() {
        acc += deficit[i] - deficit[i - smooth];
        min = min.min(acc / smooth as f64);
    }
    let n = log.len();
    let final_regulation = log[n - smooth..].iter().map(|e| e.regulation).sum::<f64>() / smooth as f64;
    Ok(TrainingTrend { final_deficit: acc / smooth as f64, min_deficit: min, final_regulation })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorqueStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Mean and population std of a per-tick Σ_j |τ̂^ext| series.
pub fn torque_stats(series: &[f64]) -> TorqueStats {
    if series.is_empty() {
        return TorqueStats { mean: 0.0, std: 0.0 };
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    TorqueStats { mean, std: var.sqrt() }
}

/// Per-tick observer labels of one trial on the two channels.
#[derive(Debug, Clone, Copy)]
pub struct LabelSeries<'a> {
    /// Primitive the human wants.
    pub target: usize,
    /// Labels of the network's prediction θ^net.
    pub intention: &'a [usize],
    /// Labels of the measured posture.
    pub behavior: &'a [usize],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntentBehavior {
    pub p_intent: f64,
    pub p_behavior: f64,
    pub ticks: usize,
}

/// Per-tick frequencies of the human-intended label on each channel, pooled over series.
pub fn intent_behavior_probs(series: &[LabelSeries<'_>]) -> Result<IntentBehavior> {
    let mut hit_i = 0usize;
    let mut hit_b = 0usize;
    let mut n_i = 0usize;
    let mut n_b = 0usize;
    for s in series {
        hit_i += s.intention.iter().filter(|&&l| l == s.target).count();
        hit_b += s.behavior.iter().filter(|&&l| l == s.target).count();
        n_i += s.intention.len();
        n_b += s.behavior.len();
    }
    if n_i == 0 || n_b == 0 {
        return Err(Error::Config("no logged ticks to compute p(I)/p(B)".into()));
    }
    Ok(IntentBehavior {
        p_intent: hit_i as f64 / n_i as f64,
        p_behavior: hit_b as f64 / n_b as f64,
        ticks: n_b,
    })
}

/// First tick at which at least `frac` of the trailing `window` labels
/// (that tick included) equal `target`. Ticks before the start count as misses,
/// so the criterion can be met before `window` labels exist.
pub fn convergence_tick(labels: &[usize], target: usize, window: usize, frac: f64) -> Option<usize> {
    if window == 0 {
        return None;
    }
    let need = ((frac * window as f64).ceil() as usize).max(1);
    let mut hits = 0;
    for (t, &l) in labels.iter().enumerate() {
        hits += usize::from(l == target);
        if t >= window {
            hits -= usize::from(labels[t - window] == target);
        }
        if hits >= need {
            return Some(t);
        }
    }
    None
}

/// Fraction of the last `n` labels equal to `target`.
pub fn tail_fraction(labels: &[usize], target: usize, n: usize) -> f64 {
    let tail = &labels[labels.len().saturating_sub(n)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().filter(|&&l| l == target).count() as f64 / tail.len() as f64
}
