//! Network configuration and parameter storage.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp on `log σ`.
pub const LOG_SIGMA_MIN: f64 = -10.0;
/// Upper clamp on `log σ`.
pub const LOG_SIGMA_MAX: f64 = 4.0;
/// Smallest σ any distribution may take.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub d_units: usize,
    pub z_units: usize,
    /// Leaky-integration time constant ι (≥ 1).
    pub timescale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Ordered low → high.
    pub layers: Vec<LayerConfig>,
    pub output_dims: usize,
    pub bins_per_dim: usize,
    /// KL weight `w` of the objective.
    pub meta_w: f64,
    pub seed: u64,
}

impl NetworkConfig {
    /// Low {40 d, 4 z, ι=2}, High {10 d, 1 z, ι=10}; 12 outputs × 11 bins.
    pub fn reference() -> Self {
        Self {
            layers: vec![
                LayerConfig { d_units: 40, z_units: 4, timescale: 2.0 },
                LayerConfig { d_units: 10, z_units: 1, timescale: 10.0 },
            ],
            output_dims: 12,
            bins_per_dim: 11,
            meta_w: 0.001,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        let mut prev = 1.0;
        for (k, l) in self.layers.iter().enumerate() {
            if l.d_units == 0 || l.z_units == 0 {
                return Err(Error::Config(format!("layer {k}: unit counts must be positive")));
            }
            if !(l.timescale >= 1.0) {
                return Err(Error::Config(format!("layer {k}: timescale {} < 1", l.timescale)));
            }
            if l.timescale < prev {
                return Err(Error::Config(format!("layer {k}: timescales must be non-decreasing")));
            }
            prev = l.timescale;
        }
        if self.output_dims == 0 || self.bins_per_dim < 2 {
            return Err(Error::Config("output needs ≥1 dim and ≥2 bins".into()));
        }
        if !(self.meta_w >= 0.0 && self.meta_w.is_finite()) {
            return Err(Error::Config(format!("meta_w must be ≥ 0, got {}", self.meta_w)));
        }
        Ok(())
    }

    pub fn output_width(&self) -> usize {
        self.output_dims * self.bins_per_dim
    }
}

/// Weights and biases of one context layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// Recurrent d → d within the layer.
    pub w_dd: Array2<f64>,
    /// d of the layer below → this layer; absent on the lowest layer.
    pub w_below: Option<Array2<f64>>,
    /// d of the layer above → this layer; absent on the top layer.
    pub w_above: Option<Array2<f64>>,
    /// z → d.
    pub w_zd: Array2<f64>,
    /// d → μ, shared by prior and posterior heads.
    pub w_mu: Array2<f64>,
    /// d → log σ, shared by prior and posterior heads.
    pub w_sigma: Array2<f64>,
    pub b_mu_prior: Array1<f64>,
    pub b_sigma_prior: Array1<f64>,
    pub b_mu_post: Array1<f64>,
    pub b_sigma_post: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
    /// All output dimensions stacked: row `i * bins + k` feeds bin `k` of dim `i`.
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = 1.0 / (cols as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

impl NetworkParams {
    /// Uniform init scaled by 1/√fan-in; biases zero.
    pub fn init(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self::init_with(config, &mut rng))
    }

    pub fn init_with(config: &NetworkConfig, rng: &mut ChaCha8Rng) -> Self {
        let n = config.layers.len();
        let layers = (0..n)
            .map(|k| {
                let l = config.layers[k];
                LayerParams {
                    w_dd: uniform(rng, l.d_units, l.d_units),
                    w_below: (k > 0).then(|| uniform(rng, l.d_units, config.layers[k - 1].d_units)),
                    w_above: (k + 1 < n).then(|| uniform(rng, l.d_units, config.layers[k + 1].d_units)),
                    w_zd: uniform(rng, l.d_units, l.z_units),
                    w_mu: uniform(rng, l.z_units, l.d_units),
                    w_sigma: uniform(rng, l.z_units, l.d_units),
                    b_mu_prior: Array1::zeros(l.z_units),
                    b_sigma_prior: Array1::zeros(l.z_units),
                    b_mu_post: Array1::zeros(l.z_units),
                    b_sigma_post: Array1::zeros(l.z_units),
                }
            })
            .collect();
        Self {
            layers,
            w_out: uniform(rng, config.output_width(), config.layers[0].d_units),
            b_out: Array1::zeros(config.output_width()),
        }
    }

    /// Same shapes, all zeros. Used as a gradient / moment accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_tensor_mut(|_, t| t.fill(0.0));
        z
    }

    pub fn check_shapes(&self, config: &NetworkConfig) -> Result<()> {
        let bad = |what: &str| Err(Error::Shape(format!("parameter `{what}` inconsistent with config")));
        if self.layers.len() != config.layers.len() {
            return bad("layers");
        }
        let n = config.layers.len();
        for (k, (p, l)) in self.layers.iter().zip(&config.layers).enumerate() {
            let (d, z) = (l.d_units, l.z_units);
            if p.w_dd.dim() != (d, d) || p.w_zd.dim() != (d, z) {
                return bad(&format!("layer{k}.w_dd/w_zd"));
            }
            if p.w_mu.dim() != (z, d) || p.w_sigma.dim() != (z, d) {
                return bad(&format!("layer{k}.w_mu/w_sigma"));
            }
            for b in [&p.b_mu_prior, &p.b_sigma_prior, &p.b_mu_post, &p.b_sigma_post] {
                if b.len() != z {
                    return bad(&format!("layer{k}.biases"));
                }
            }
            match (&p.w_below, k) {
                (None, 0) => {}
                (Some(w), k) if k > 0 && w.dim() == (d, config.layers[k - 1].d_units) => {}
                _ => return bad(&format!("layer{k}.w_below")),
            }
            match &p.w_above {
                None if k + 1 == n => {}
                Some(w) if k + 1 < n && w.dim() == (d, config.layers[k + 1].d_units) => {}
                _ => return bad(&format!("layer{k}.w_above")),
            }
        }
        if self.w_out.dim() != (config.output_width(), config.layers[0].d_units)
            || self.b_out.len() != config.output_width()
        {
            return bad("output");
        }
        if !self.all_finite() {
            return Err(Error::Domain("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_tensor(|_, t| ok &= t.iter().all(|v| v.is_finite()));
        ok
    }

    /// Visit every tensor in a fixed order with a stable name.
    pub fn for_each_tensor(&self, mut f: impl FnMut(&str, &[f64])) {
        for (k, l) in self.layers.iter().enumerate() {
            f(&format!("layer{k}.w_dd"), l.w_dd.as_slice().unwrap());
            if let Some(w) = &l.w_below {
                f(&format!("layer{k}.w_below"), w.as_slice().unwrap());
            }
            if let Some(w) = &l.w_above {
                f(&format!("layer{k}.w_above"), w.as_slice().unwrap());
            }
            f(&format!("layer{k}.w_zd"), l.w_zd.as_slice().unwrap());
            f(&format!("layer{k}.w_mu"), l.w_mu.as_slice().unwrap());
            f(&format!("layer{k}.w_sigma"), l.w_sigma.as_slice().unwrap());
            f(&format!("layer{k}.b_mu_prior"), l.b_mu_prior.as_slice().unwrap());
            f(&format!("layer{k}.b_sigma_prior"), l.b_sigma_prior.as_slice().unwrap());
            f(&format!("layer{k}.b_mu_post"), l.b_mu_post.as_slice().unwrap());
            f(&format!("layer{k}.b_sigma_post"), l.b_sigma_post.as_slice().unwrap());
        }
        f("out.w", self.w_out.as_slice().unwrap());
        f("out.b", self.b_out.as_slice().unwrap());
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        for (k, l) in self.layers.iter_mut().enumerate() {
            f(&format!("layer{k}.w_dd"), l.w_dd.as_slice_mut().unwrap());
            if let Some(w) = &mut l.w_below {
                f(&format!("layer{k}.w_below"), w.as_slice_mut().unwrap());
            }
            if let Some(w) = &mut l.w_above {
                f(&format!("layer{k}.w_above"), w.as_slice_mut().unwrap());
            }
            f(&format!("layer{k}.w_zd"), l.w_zd.as_slice_mut().unwrap());
            f(&format!("layer{k}.w_mu"), l.w_mu.as_slice_mut().unwrap());
            f(&format!("layer{k}.w_sigma"), l.w_sigma.as_slice_mut().unwrap());
            f(&format!("layer{k}.b_mu_prior"), l.b_mu_prior.as_slice_mut().unwrap());
            f(&format!("layer{k}.b_sigma_prior"), l.b_sigma_prior.as_slice_mut().unwrap());
            f(&format!("layer{k}.b_mu_post"), l.b_mu_post.as_slice_mut().unwrap());
            f(&format!("layer{k}.b_sigma_post"), l.b_sigma_post.as_slice_mut().unwrap());
        }
        f("out.w", self.w_out.as_slice_mut().unwrap());
        f("out.b", self.b_out.as_slice_mut().unwrap());
    }

    /// Flat copy of every tensor, in visiting order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each_tensor(|_, t| out.extend_from_slice(t));
        out
    }

    /// Apply `f(param, other)` element-wise across two identically shaped sets.
    pub fn zip_apply(&mut self, other: &NetworkParams, mut f: impl FnMut(&mut f64, f64)) {
        let flat = other.to_flat();
        let mut offset = 0;
        self.for_each_tensor_mut(|_, t| {
            let len = t.len();
            for (p, g) in t.iter_mut().zip(&flat[offset..offset + len]) {
                f(p, *g);
            }
            offset += len;
        });
    }
}

/// Deterministic state carried between steps: `h` and `d = tanh(h)` per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Carry {
    pub h: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
}

impl Carry {
    /// `h₀ = d₀ = 0`.
    pub fn zeros(config: &NetworkConfig) -> Self {
        let h: Vec<Vec<f64>> = config.layers.iter().map(|l| vec![0.0; l.d_units]).collect();
        Self { d: h.clone(), h }
    }
}
