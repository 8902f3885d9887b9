//! Feed-forward primitive classifier on instantaneous postures.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::Trajectory;
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObserverConfig {
    pub hidden: [usize; 2],
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Every `holdout_every`-th step of each primitive is held out.
    pub holdout_every: usize,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            hidden: [150, 15],
            epochs: 1500,
            optimizer: OptimizerKind::adam(1e-3),
            seed: 0,
            holdout_every: 5,
        }
    }
}

/// `inputs → tanh → tanh → sigmoid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverNet {
    pub labels: Vec<String>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPostures {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverReport {
    pub net: ObserverNet,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_loss: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let bound = 1.0 / (cols as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl ObserverNet {
    pub fn init(inputs: usize, hidden: [usize; 2], labels: Vec<String>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = labels.len();
        Self {
            w1: uniform(hidden[0], inputs, &mut rng),
            b1: Array1::zeros(hidden[0]),
            w2: uniform(hidden[1], hidden[0], &mut rng),
            b2: Array1::zeros(hidden[1]),
            w3: uniform(classes, hidden[1], &mut rng),
            b3: Array1::zeros(classes),
            labels,
        }
    }

    pub fn inputs(&self) -> usize {
        self.w1.ncols()
    }

    /// Pre-sigmoid outputs for a batch (rows are postures).
    pub fn logits(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let h1 = (x.dot(&self.w1.t()) + &self.b1).mapv(f64::tanh);
        let h2 = (h1.dot(&self.w2.t()) + &self.b2).mapv(f64::tanh);
        let o = h2.dot(&self.w3.t()) + &self.b3;
        (h1, h2, o)
    }

    pub fn classify_posture(&self, posture: &[f64]) -> Result<Classification> {
        if posture.len() != self.inputs() {
            return Err(Error::Shape(format!(
                "posture has {} dims, observer expects {}",
                posture.len(),
                self.inputs()
            )));
        }
        let x = Array2::from_shape_vec((1, posture.len()), posture.to_vec()).expect("row shape");
        let (_, _, o) = self.logits(&x);
        let scores: Vec<f64> = o.row(0).iter().map(|v| sigmoid(*v)).collect();
        let label = argmax(&scores);
        Ok(Classification { label, scores })
    }

    pub fn accuracy(&self, data: &LabeledPostures) -> f64 {
        if data.labels.is_empty() {
            return 0.0;
        }
        let (_, _, o) = self.logits(&data.inputs);
        let hits = o
            .outer_iter()
            .zip(&data.labels)
            .filter(|(row, &l)| argmax(row.as_slice().expect("contiguous")) == l)
            .count();
        hits as f64 / data.labels.len() as f64
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_slice_mut().expect("contiguous"),
            self.b1.as_slice_mut().expect("contiguous"),
            self.w2.as_slice_mut().expect("contiguous"),
            self.b2.as_slice_mut().expect("contiguous"),
            self.w3.as_slice_mut().expect("contiguous"),
            self.b3.as_slice_mut().expect("contiguous"),
        ]
    }

    fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + self.b3.len()
    }

    /// Mean binary cross-entropy and its ascent direction (negative gradient), flattened.
    fn loss_and_ascent(&self, data: &LabeledPostures) -> (f64, Vec<f64>) {
        let n = data.labels.len() as f64;
        let (h1, h2, o) = self.logits(&data.inputs);
        let classes = self.labels.len();
        let mut loss = 0.0;
        let mut go = Array2::zeros(o.raw_dim());
        for (i, &l) in data.labels.iter().enumerate() {
            for c in 0..classes {
                let y = if c == l { 1.0 } else { 0.0 };
                let z = o[[i, c]];
                // log σ(z) = −softplus(−z), log(1 − σ(z)) = −softplus(z)
                loss += y * softplus(-z) + (1.0 - y) * softplus(z);
                go[[i, c]] = (sigmoid(z) - y) / n;
            }
        }
        let gw3 = go.t().dot(&h2);
        let gb3 = go.sum_axis(Axis(0));
        let g2 = go.dot(&self.w3) * h2.mapv(|v| 1.0 - v * v);
        let gw2 = g2.t().dot(&h1);
        let gb2 = g2.sum_axis(Axis(0));
        let g1 = g2.dot(&self.w2) * h1.mapv(|v| 1.0 - v * v);
        let gw1 = g1.t().dot(&data.inputs);
        let gb1 = g1.sum_axis(Axis(0));
        let flat = gw1
            .iter()
            .chain(&gb1)
            .chain(&gw2)
            .chain(&gb2)
            .chain(&gw3)
            .chain(&gb3)
            .map(|g| -g)
            .collect();
        (loss / n, flat)
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Split each labelled trajectory by time step: every `every`-th step goes to the test set.
pub fn split_by_steps(trajectories: &[Trajectory], every: usize) -> Result<(LabeledPostures, LabeledPostures)> {
    if trajectories.is_empty() {
        return Err(Error::Config("no trajectories to split".into()));
    }
    if every < 2 {
        return Err(Error::Config("holdout stride must be ≥ 2".into()));
    }
    let dims = trajectories[0].dims();
    let mut train = (Vec::new(), Vec::new());
    let mut test = (Vec::new(), Vec::new());
    for (label, tr) in trajectories.iter().enumerate() {
        if tr.dims() != dims {
            return Err(Error::Shape("trajectories differ in dimension".into()));
        }
        for (t, row) in tr.values.outer_iter().enumerate() {
            let dst = if t % every == every - 1 { &mut test } else { &mut train };
            dst.0.extend(row.iter().copied());
            dst.1.push(label);
        }
    }
    let build = |(v, l): (Vec<f64>, Vec<usize>)| LabeledPostures {
        inputs: Array2::from_shape_vec((l.len(), dims), v).expect("rows of equal length"),
        labels: l,
    };
    Ok((build(train), build(test)))
}

/// Train on labelled trajectories using the configured step holdout.
pub fn fit_observer(labels: Vec<String>, trajectories: &[Trajectory], config: &ObserverConfig) -> Result<ObserverReport> {
    let (train, test) = split_by_steps(trajectories, config.holdout_every)?;
    train_observer(labels, &train, &test, config)
}

pub fn train_observer(
    labels: Vec<String>,
    train: &LabeledPostures,
    test: &LabeledPostures,
    config: &ObserverConfig,
) -> Result<ObserverReport> {
    let classes = labels.len();
    for c in 0..classes {
        if !train.labels.contains(&c) {
            return Err(Error::Config(format!("class `{}` missing from training set", labels[c])));
        }
    }
    if train.labels.iter().any(|&l| l >= classes) {
        return Err(Error::Config("label index out of range".into()));
    }
    let mut net = ObserverNet::init(train.inputs.ncols(), config.hidden, labels, config.seed);
    let mut opt = Optimizer::new(config.optimizer, net.len());
    let mut final_loss = f64::NAN;
    for _ in 0..config.epochs {
        let (loss, grad) = net.loss_and_ascent(train);
        final_loss = loss;
        let mut flat: Vec<f64> = net.tensors_mut().iter().flat_map(|t| t.iter().copied()).collect();
        opt.step(flat.iter_mut(), &grad);
        let mut off = 0;
        for t in net.tensors_mut() {
            let len = t.len();
            t.copy_from_slice(&flat[off..off + len]);
            off += len;
        }
    }
    if !final_loss.is_finite() {
        return Err(Error::Diverged { epoch: config.epochs });
    }
    Ok(ObserverReport {
        train_accuracy: net.accuracy(train),
        test_accuracy: net.accuracy(test),
        final_loss,
        net,
    })
}
