//! Synthetic periodic motion primitives standing in for recorded demonstrations.
//!
//! Primitive `p` moves joint `j` as
//!
//! ```text
//! θ(t) = c_pj + a_p · sin(2π k_p t / T + φ_pj)
//! ```
//!
//! with an integer cycle count `k_p`, so every primitive closes on itself
//! after `T` steps and can be looped. The per-primitive offsets `c_pj` sit
//! 120° apart on a cosine pattern over the joints, which keeps every single
//! posture attributable to one primitive. The phase pattern `φ_pj` runs at
//! spatial frequency `p + 2` over the joints, orthogonal to the offset
//! pattern, so with equal amplitudes the zero posture is equidistant from
//! every posture of every primitive.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::encoding::{default_joint_names, Trajectory};
use crate::error::{Error, Result};

pub const LABELS: [&str; 3] = ["A", "B", "C"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrimitiveSpec {
    pub dims: usize,
    pub steps: usize,
    pub rate_hz: f64,
    /// Distance of each primitive's centre posture from zero, per joint.
    pub offset: f64,
    pub amplitudes: [f64; 3],
    pub cycles: [usize; 3],
    /// Symmetric joint limit, also used as the coded range.
    pub limit: f64,
}

impl Default for PrimitiveSpec {
    fn default() -> Self {
        Self {
            dims: 12,
            steps: 90,
            rate_hz: crate::NETWORK_RATE_HZ,
            offset: 0.3,
            amplitudes: [0.25, 0.25, 0.25],
            cycles: [2, 3, 4],
            limit: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveSet {
    pub labels: Vec<String>,
    pub trajectories: Vec<Trajectory>,
}

impl PrimitiveSet {
    pub fn get(&self, label: &str) -> Option<&Trajectory> {
        self.labels.iter().position(|l| l == label).map(|i| &self.trajectories[i])
    }
}

/// Centre posture of primitive `p`, joint `j`.
pub fn center(spec: &PrimitiveSpec, p: usize, j: usize) -> f64 {
    spec.offset * (2.0 * PI * p as f64 / 3.0 + PI * j as f64 / 6.0).cos()
}

pub fn make_primitives(spec: &PrimitiveSpec) -> Result<PrimitiveSet> {
    if spec.dims < 2 {
        return Err(Error::Config(format!("primitives need dims >= 2, got {}", spec.dims)));
    }
    if spec.steps < 2 {
        return Err(Error::Config("primitives need at least 2 steps".into()));
    }
    let peak = spec.offset.abs() + spec.amplitudes.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if !(peak < spec.limit) {
        return Err(Error::Config(format!(
            "offset + amplitude {peak} exceeds joint limit {}",
            spec.limit
        )));
    }
    let names = default_joint_names(spec.dims);
    let limits = vec![(-spec.limit, spec.limit); spec.dims];
    let mut trajectories = Vec::with_capacity(3);
    for p in 0..3 {
        let k = spec.cycles[p] as f64;
        let amp = spec.amplitudes[p];
        let values = Array2::from_shape_fn((spec.steps, spec.dims), |(t, j)| {
            let phase = 2.0 * PI * (j * (p + 2)) as f64 / spec.dims as f64;
            center(spec, p, j) + amp * (2.0 * PI * k * t as f64 / spec.steps as f64 + phase).sin()
        });
        trajectories.push(Trajectory::new(spec.rate_hz, names.clone(), limits.clone(), values)?);
    }
    Ok(PrimitiveSet {
        labels: LABELS.iter().map(|s| s.to_string()).collect(),
        trajectories,
    })
}

/// Mean over steps of the per-step L2 distance.
pub fn mean_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    let n = a.steps().min(b.steps());
    (0..n)
        .map(|t| {
            a.values
                .row(t)
                .iter()
                .zip(b.values.row(t))
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / n as f64
}

/// Mean L2 norm of consecutive-step differences.
pub fn step_variation(a: &Trajectory) -> f64 {
    let n = a.steps();
    if n < 2 {
        return 0.0;
    }
    (1..n)
        .map(|t| {
            a.values
                .row(t)
                .iter()
                .zip(a.values.row(t - 1))
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set() -> PrimitiveSet {
        make_primitives(&PrimitiveSpec::default()).unwrap()
    }

    #[test]
    fn reference_scale_shapes() {
        let s = set();
        assert_eq!(s.labels, vec!["A", "B", "C"]);
        for t in &s.trajectories {
            assert_eq!(t.steps(), 90);
            assert_eq!(t.dims(), 12);
            assert_eq!(t.rate_hz, 4.0);
        }
    }

    #[test]
    fn primitives_are_mutually_distinguishable() {
        let s = set();
        let max_var = s.trajectories.iter().map(step_variation).fold(0.0, f64::max);
        for i in 0..3 {
            for j in i + 1..3 {
                let d = mean_distance(&s.trajectories[i], &s.trajectories[j]);
                assert!(d > 5.0 * max_var, "{i}/{j}: {d} vs 5 × {max_var}");
            }
        }
    }

    #[test]
    fn every_posture_is_nearest_to_its_own_primitive() {
        // Closest cross-primitive posture pair must be well apart.
        let s = set();
        let mut min_cross = f64::INFINITY;
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                for a in s.trajectories[i].values.rows() {
                    for b in s.trajectories[j].values.rows() {
                        let d = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                        min_cross = min_cross.min(d);
                    }
                }
            }
        }
        assert!(min_cross > 0.3, "{min_cross}");
    }

    #[test]
    fn zero_posture_is_equidistant() {
        let s = set();
        let norms: Vec<f64> = s
            .trajectories
            .iter()
            .flat_map(|t| t.values.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect::<Vec<_>>())
            .collect();
        let first = norms[0];
        assert!(norms.iter().all(|n| (n - first).abs() < 1e-12), "{first}");
    }

    #[test]
    fn primitives_loop() {
        let spec = PrimitiveSpec::default();
        let s = set();
        for (p, t) in s.trajectories.iter().enumerate() {
            // Step T would equal step 0; the last step is one sample short of closing.
            let step = 2.0 * PI * spec.cycles[p] as f64 / spec.steps as f64 * spec.amplitudes[p];
            for j in 0..spec.dims {
                assert!((t.values[[0, j]] - t.values[[89, j]]).abs() <= step + 1e-12);
            }
        }
    }

    #[test]
    fn within_limits_and_rejects_bad_spec() {
        for t in &set().trajectories {
            t.validate().unwrap();
        }
        let bad = PrimitiveSpec { dims: 1, ..PrimitiveSpec::default() };
        assert!(make_primitives(&bad).is_err());
        let wide = PrimitiveSpec { offset: 0.9, ..PrimitiveSpec::default() };
        assert!(make_primitives(&wide).is_err());
    }
}
