//! Offline learning of cognitive profiles.
//!
//! Every epoch runs one posterior rollout per training sequence (fresh ε),
//! backpropagates the KL-weighted bound, updates the per-sequence adaptive
//! offsets, then applies a single synchronized parameter update.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, RngState, SCHEMA_VERSION};
use crate::encoding::{EncodedSequence, SoftmaxCoding, Trajectory};
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerKind};
use crate::pvrnn::{
    bptt_grads, elbo, posterior_rollout, reconstruction_max, AdaptiveSequence, AdaptiveStep, Carry, GradScope,
    NetworkConfig, NetworkParams, Noise,
};

/// KL weight used by every profile while interacting.
pub const INTERACTION_W: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Rigid,
    Moderate,
    Flexible,
}

impl ProfileName {
    pub const ALL: [ProfileName; 3] = [ProfileName::Rigid, ProfileName::Moderate, ProfileName::Flexible];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProfileName::Rigid => "rigid",
            ProfileName::Moderate => "moderate",
            ProfileName::Flexible => "flexible",
        }
    }
}

impl fmt::Display for ProfileName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProfileName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rigid" => Ok(ProfileName::Rigid),
            "moderate" | "mod" => Ok(ProfileName::Moderate),
            "flexible" | "flex" => Ok(ProfileName::Flexible),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CognitiveProfile {
    pub name: ProfileName,
    /// KL weight during training.
    pub train_w: f64,
    /// KL weight during error regression.
    pub interact_w: f64,
}

impl CognitiveProfile {
    /// Strong (0.01), moderate (0.001) and low (0.0001) intentionality.
    pub fn reference(name: ProfileName) -> Self {
        let train_w = match name {
            ProfileName::Rigid => 0.01,
            ProfileName::Moderate => 0.001,
            ProfileName::Flexible => 0.0001,
        };
        Self {
            name,
            train_w,
            interact_w: INTERACTION_W,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub params_opt: OptimizerKind,
    /// Rule applied to the per-sequence adaptive offsets.
    pub adaptive_opt: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5000,
            params_opt: OptimizerKind::adam(1e-3),
            adaptive_opt: OptimizerKind::Plain { lr: 0.1 },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Summed over all sequences.
    pub reconstruction: f64,
    pub regulation: f64,
}

/// `a ← a + α · ∂L/∂a`
pub fn update_adaptive(a: &mut [AdaptiveStep], grads: &[AdaptiveStep], alpha: f64) -> Result<()> {
    if a.len() != grads.len() {
        return Err(Error::Shape(format!("{} adaptive steps, {} gradients", a.len(), grads.len())));
    }
    for (s, g) in a.iter_mut().zip(grads) {
        for (dst, src) in s.mu.iter_mut().zip(&g.mu).chain(s.sigma.iter_mut().zip(&g.sigma)) {
            if dst.len() != src.len() {
                return Err(Error::Shape("adaptive layer width mismatch".into()));
            }
            for (v, gv) in dst.iter_mut().zip(src) {
                *v += alpha * gv;
            }
        }
    }
    Ok(())
}

pub(crate) fn flat_adaptive(steps: &[AdaptiveStep]) -> Vec<f64> {
    steps
        .iter()
        .flat_map(|s| s.mu.iter().chain(&s.sigma).flatten().copied())
        .collect()
}

pub(crate) fn adaptive_values_mut(steps: &mut [AdaptiveStep]) -> impl Iterator<Item = &mut f64> + '_ {
    steps.iter_mut().flat_map(|s| {
        let AdaptiveStep { mu, sigma } = s;
        mu.iter_mut().chain(sigma.iter_mut()).flatten()
    })
}

/// Training state: everything needed to continue bit-exactly.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: NetworkConfig,
    pub coding: SoftmaxCoding,
    pub profile: CognitiveProfile,
    pub train: TrainConfig,
    pub labels: Vec<String>,
    pub dataset: Vec<Trajectory>,
    pub params: NetworkParams,
    pub adaptive: Vec<AdaptiveSequence>,
    pub log: Vec<EpochLog>,
    targets: Vec<EncodedSequence>,
    param_opt: Optimizer,
    adaptive_opts: Vec<Optimizer>,
    rng: ChaCha8Rng,
    epochs_done: usize,
}

impl Trainer {
    pub fn new(
        mut config: NetworkConfig,
        coding: SoftmaxCoding,
        profile: CognitiveProfile,
        train: TrainConfig,
        labels: Vec<String>,
        dataset: Vec<Trajectory>,
    ) -> Result<Self> {
        config.meta_w = profile.train_w;
        config.validate()?;
        if dataset.is_empty() {
            return Err(Error::Config("training dataset is empty".into()));
        }
        if labels.len() != dataset.len() {
            return Err(Error::Config("one label per training sequence required".into()));
        }
        let dims = dataset[0].dims();
        if dataset.iter().any(|t| t.dims() != dims) {
            return Err(Error::Shape("training sequences differ in dimension".into()));
        }
        if dims != config.output_dims || coding.dims() != dims || coding.bins() != config.bins_per_dim {
            return Err(Error::Shape("dataset, coding and network output disagree".into()));
        }
        let targets = dataset
            .iter()
            .map(|t| coding.encode_trajectory(t))
            .collect::<Result<Vec<_>>>()?;
        let params = NetworkParams::init(&config)?;
        let adaptive: Vec<AdaptiveSequence> = targets
            .iter()
            .map(|t| AdaptiveSequence::zeros(&config, t.steps()))
            .collect();
        let param_opt = Optimizer::new(train.params_opt, params.to_flat().len());
        let adaptive_opts = adaptive
            .iter()
            .map(|a| Optimizer::new(train.adaptive_opt, a.values().count()))
            .collect();
        let rng = ChaCha8Rng::seed_from_u64(train.seed);
        Ok(Self {
            config,
            coding,
            profile,
            train,
            labels,
            dataset,
            params,
            adaptive,
            log: Vec::new(),
            targets,
            param_opt,
            adaptive_opts,
            rng,
            epochs_done: 0,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn targets(&self) -> &[EncodedSequence] {
        &self.targets
    }

    /// One full-batch epoch.
    pub fn epoch(&mut self) -> Result<EpochLog> {
        let w = self.profile.train_w;
        let mut grad_acc = self.params.zeros_like();
        let mut rec = 0.0;
        let mut reg = 0.0;
        let init = Carry::zeros(&self.config);
        for (idx, target) in self.targets.iter().enumerate() {
            let noise = Noise::sample(&self.config, target.steps(), &mut self.rng);
            let rollout = posterior_rollout(&self.params, &self.config, &init, &self.adaptive[idx].steps, &noise)?;
            let terms = elbo(&rollout, target, w)?;
            rec += terms.reconstruction;
            reg += terms.regulation;
            let g = bptt_grads(&rollout, target, w, &self.params, &self.config, GradScope::All)?;
            let gp = g.params.expect("full-scope gradients");
            grad_acc.zip_apply(&gp, |acc, v| *acc += v);
            let flat = flat_adaptive(&g.adaptive);
            self.adaptive_opts[idx].step(adaptive_values_mut(&mut self.adaptive[idx].steps), &flat);
        }
        let epoch = self.epochs_done + 1;
        if !(rec.is_finite() && reg.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        let flat = grad_acc.to_flat();
        let mut buf = self.params.to_flat();
        self.param_opt.step(buf.iter_mut(), &flat);
        let mut offset = 0;
        self.params.for_each_tensor_mut(|_, t| {
            let len = t.len();
            t.copy_from_slice(&buf[offset..offset + len]);
            offset += len;
        });
        if !self.params.all_finite() {
            return Err(Error::Diverged { epoch });
        }
        self.epochs_done = epoch;
        let entry = EpochLog {
            epoch,
            reconstruction: rec,
            regulation: reg,
        };
        self.log.push(entry);
        Ok(entry)
    }

    pub fn run(&mut self, epochs: usize) -> Result<()> {
        for _ in 0..epochs {
            self.epoch()?;
        }
        Ok(())
    }

    /// `Σ target·log target` over the dataset: the reconstruction ceiling.
    pub fn reconstruction_ceiling(&self) -> f64 {
        self.targets.iter().map(reconstruction_max).sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            schema_version: SCHEMA_VERSION,
            config: self.config.clone(),
            coding: self.coding.clone(),
            profile: self.profile,
            train: self.train.clone(),
            labels: self.labels.clone(),
            dataset: self.dataset.clone(),
            params: self.params.clone(),
            adaptive: self.adaptive.clone(),
            param_optimizer: self.param_opt.clone(),
            adaptive_optimizers: self.adaptive_opts.clone(),
            rng: RngState::capture(&self.rng),
            epochs_done: self.epochs_done,
            last_epoch: self.log.last().copied(),
        }
    }

    /// Resume from a checkpoint; the epoch log restarts empty.
    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        ck.validate()?;
        let targets = ck
            .dataset
            .iter()
            .map(|t| ck.coding.encode_trajectory(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rng: ck.rng.restore()?,
            config: ck.config,
            coding: ck.coding,
            profile: ck.profile,
            train: ck.train,
            labels: ck.labels,
            dataset: ck.dataset,
            params: ck.params,
            adaptive: ck.adaptive,
            log: Vec::new(),
            targets,
            param_opt: ck.param_optimizer,
            adaptive_opts: ck.adaptive_optimizers,
            epochs_done: ck.epochs_done,
        })
    }
}

/// Train a profile from scratch for `train.epochs` epochs.
pub fn train(
    labels: Vec<String>,
    dataset: Vec<Trajectory>,
    config: NetworkConfig,
    coding: SoftmaxCoding,
    profile: CognitiveProfile,
    train: TrainConfig,
) -> Result<Trainer> {
    if train.epochs == 0 {
        return Err(Error::Config("epochs must be ≥ 1".into()));
    }
    let epochs = train.epochs;
    let mut trainer = Trainer::new(config, coding, profile, train, labels, dataset)?;
    trainer.run(epochs)?;
    Ok(trainer)
}

/// Training curves as CSV: `epoch,reconstruction,regulation`.
pub fn write_curves_csv<W: std::io::Write>(log: &[EpochLog], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "reconstruction", "regulation"])?;
    for e in log {
        w.write_record([e.epoch.to_string(), e.reconstruction.to_string(), e.regulation.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Parse curves written by [`write_curves_csv`].
pub fn read_curves_csv<R: std::io::Read>(reader: R) -> Result<Vec<EpochLog>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::Parse(format!("curves row has {} fields", rec.len())));
        let num = |i: usize| -> Result<f64> {
            field(i)?.trim().parse().map_err(|_| Error::Parse(format!("bad number `{}`", rec.get(i).unwrap_or(""))))
        };
        let epoch = field(0)?.trim().parse().map_err(|_| Error::Parse("bad epoch".into()))?;
        out.push(EpochLog { epoch, reconstruction: num(1)?, regulation: num(2)? });
    }
    Ok(out)
}
