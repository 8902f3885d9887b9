//! Gradient-ascent optimizers over flat parameter vectors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    /// `θ ← θ + lr · g`
    Plain { lr: f64 },
    /// Adaptive moments with bias correction, ascending.
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Plain { lr } | OptimizerKind::Adam { lr, .. } => lr,
        }
    }
}

/// Optimizer with its running state, sized for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, len: usize) -> Self {
        let (m, v) = match kind {
            OptimizerKind::Plain { .. } => (Vec::new(), Vec::new()),
            OptimizerKind::Adam { .. } => (vec![0.0; len], vec![0.0; len]),
        };
        Self { kind, t: 0, m, v }
    }

    /// Drop accumulated moments, keep the rule.
    pub fn reset(&mut self) {
        self.t = 0;
        self.m.fill(0.0);
        self.v.fill(0.0);
    }

    /// Ascend along `grads`. `params` must yield exactly `grads.len()` values.
    pub fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut f64>, grads: &[f64]) {
        self.t += 1;
        match self.kind {
            OptimizerKind::Plain { lr } => {
                for (p, g) in params.zip(grads) {
                    *p += lr * g;
                }
            }
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for (((p, &g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p += lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
    }

    /// Forget the moments of the first `n` values, e.g. when a window slides.
    pub fn drop_front(&mut self, n: usize) {
        let n = n.min(self.m.len());
        self.m.drain(..n);
        self.v.drain(..n);
    }

    /// Resize moment buffers, e.g. when a regression window grows.
    pub fn resize(&mut self, len: usize) {
        if matches!(self.kind, OptimizerKind::Adam { .. }) {
            self.m.resize(len, 0.0);
            self.v.resize(len, 0.0);
        }
    }
}
