//! Two-component principal component analysis of latent series.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca2Result {
    pub mean: Vec<f64>,
    /// Orthonormal, strongest first.
    pub axes: [Vec<f64>; 2],
    /// Fractions of total variance, non-increasing.
    pub explained: [f64; 2],
    pub projected: Vec<[f64; 2]>,
    /// Zero total variance: axes are an arbitrary orthonormal pair.
    pub degenerate: bool,
}

impl Pca2Result {
    pub fn project(&self, x: &[f64]) -> Result<[f64; 2]> {
        if x.len() != self.mean.len() {
            return Err(Error::Shape(format!("vector has {} dims, PCA fitted on {}", x.len(), self.mean.len())));
        }
        let mut out = [0.0; 2];
        for (o, axis) in out.iter_mut().zip(&self.axes) {
            *o = x.iter().zip(&self.mean).zip(axis).map(|((v, m), a)| (v - m) * a).sum();
        }
        Ok(out)
    }

    pub fn project_all(&self, series: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
        series.iter().map(|x| self.project(x)).collect()
    }

    /// Mean squared reconstruction error using the first `k` (1 or 2) components.
    pub fn reconstruction_error(&self, series: &[Vec<f64>], k: usize) -> Result<f64> {
        let k = k.clamp(1, 2);
        let mut total = 0.0;
        for x in series {
            let p = self.project(x)?;
            for (i, (v, m)) in x.iter().zip(&self.mean).enumerate() {
                let rec: f64 = m + (0..k).map(|c| p[c] * self.axes[c][i]).sum::<f64>();
                total += (v - rec).powi(2);
            }
        }
        Ok(total / series.len().max(1) as f64)
    }
}

pub fn pca2(series: &[Vec<f64>]) -> Result<Pca2Result> {
    if series.len() < 3 {
        return Err(Error::Config(format!("PCA needs at least 3 samples, got {}", series.len())));
    }
    let dim = series[0].len();
    if dim < 2 {
        return Err(Error::Config("PCA needs vectors of dimension ≥ 2".into()));
    }
    if series.iter().any(|x| x.len() != dim) {
        return Err(Error::Shape("samples differ in dimension".into()));
    }
    let n = series.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in series {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for x in series {
        for i in 0..dim {
            let di = x[i] - mean[i];
            for j in i..dim {
                cov[(i, j)] += di * (x[j] - mean[j]) / n;
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    let total: f64 = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let degenerate = !(total > 0.0);
    let axes = if degenerate {
        let mut e0 = vec![0.0; dim];
        let mut e1 = vec![0.0; dim];
        e0[0] = 1.0;
        e1[1] = 1.0;
        [e0, e1]
    } else {
        [0, 1].map(|c| {
            let mut v: Vec<f64> = eig.eigenvectors.column(order[c]).iter().copied().collect();
            // Sign convention: largest-magnitude entry positive.
            let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
    };
    let explained = if degenerate {
        [0.0, 0.0]
    } else {
        [0, 1].map(|c| (eig.eigenvalues[order[c]].max(0.0) / total).clamp(0.0, 1.0))
    };
    let mut out = Pca2Result {
        mean,
        axes,
        explained,
        projected: Vec::new(),
        degenerate,
    };
    out.projected = out.project_all(series)?;
    Ok(out)
}
