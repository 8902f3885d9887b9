//! Joint-angle trajectories and their sparse softmax coding.
//!
//! Each joint angle is represented as a probability vector over `bins`
//! reference angles spread evenly over the joint's coded range:
//!
//! ```text
//! p_k ∝ exp(-sharpness · (angle - center_k)²)
//! ```
//!
//! Decoding takes the expectation `Σ p_k · center_k`, which gives the
//! controller a continuous target rather than a quantized one.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayViewMut1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the sum-to-one check in [`SoftmaxCoding::decode_probs`].
pub const PROB_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxCoding {
    bins: usize,
    sharpness: f64,
    /// `centers[dim][bin]`, strictly increasing per dimension.
    centers: Vec<Vec<f64>>,
}

impl SoftmaxCoding {
    pub const DEFAULT_BINS: usize = 11;
    pub const DEFAULT_SHARPNESS: f64 = 25.0;

    /// Evenly spaced centers over each `(lo, hi)` range.
    pub fn uniform(ranges: &[(f64, f64)], bins: usize, sharpness: f64) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::Config("coding needs at least one dimension".into()));
        }
        if bins < 2 {
            return Err(Error::Config(format!("bins_per_dim must be >= 2, got {bins}")));
        }
        if !(sharpness > 0.0 && sharpness.is_finite()) {
            return Err(Error::Config(format!("sharpness must be positive, got {sharpness}")));
        }
        let mut centers = Vec::with_capacity(ranges.len());
        for &(lo, hi) in ranges {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::Config(format!("invalid coded range [{lo}, {hi}]")));
            }
            let step = (hi - lo) / (bins - 1) as f64;
            let mut row: Vec<f64> = (0..bins).map(|k| lo + step * k as f64).collect();
            // Pin the endpoint so the range is spanned exactly.
            row[bins - 1] = hi;
            centers.push(row);
        }
        Ok(Self {
            bins,
            sharpness,
            centers,
        })
    }

    /// Same range for every dimension.
    pub fn symmetric(dims: usize, lo: f64, hi: f64, bins: usize, sharpness: f64) -> Result<Self> {
        Self::uniform(&vec![(lo, hi); dims], bins, sharpness)
    }

    pub fn dims(&self) -> usize {
        self.centers.len()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn sharpness(&self) -> f64 {
        self.sharpness
    }

    pub fn centers(&self, dim: usize) -> &[f64] {
        &self.centers[dim]
    }

    pub fn range(&self, dim: usize) -> (f64, f64) {
        let c = &self.centers[dim];
        (c[0], c[c.len() - 1])
    }

    pub fn bin_width(&self, dim: usize) -> f64 {
        let (lo, hi) = self.range(dim);
        (hi - lo) / (self.bins - 1) as f64
    }

    /// Clamp an angle into the coded range of `dim`.
    pub fn clamp(&self, dim: usize, angle: f64) -> f64 {
        let (lo, hi) = self.range(dim);
        angle.clamp(lo, hi)
    }

    pub fn encode_angle(&self, dim: usize, angle: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.bins];
        self.encode_into(dim, angle, ArrayViewMut1::from(&mut out[..]))?;
        Ok(out)
    }

    fn encode_into(&self, dim: usize, angle: f64, mut out: ArrayViewMut1<f64>) -> Result<()> {
        let (lo, hi) = self.range(dim);
        if !(angle >= lo && angle <= hi) {
            return Err(Error::OutOfRange { value: angle, lo, hi });
        }
        let centers = &self.centers[dim];
        // Subtract the max exponent (nearest center) before exponentiating.
        let nearest = centers
            .iter()
            .map(|c| (angle - c).powi(2))
            .fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for (o, c) in out.iter_mut().zip(centers) {
            let e = (-self.sharpness * ((angle - c).powi(2) - nearest)).exp();
            *o = e;
            total += e;
        }
        out.mapv_inplace(|v| v / total);
        Ok(())
    }

    pub fn decode_probs(&self, dim: usize, probs: ArrayView1<f64>) -> Result<f64> {
        if probs.len() != self.bins {
            return Err(Error::InvalidProbs(format!(
                "expected {} bins, got {}",
                self.bins,
                probs.len()
            )));
        }
        let mut sum = 0.0;
        for &p in probs {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidProbs(format!("entry {p} is not a probability")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidProbs(format!("entries sum to {sum}")));
        }
        Ok(probs
            .iter()
            .zip(&self.centers[dim])
            .map(|(p, c)| p * c)
            .sum())
    }

    /// Encode one posture (one angle per dimension) into a flat `dims * bins` row.
    pub fn encode_posture(&self, posture: &[f64]) -> Result<Vec<f64>> {
        if posture.len() != self.dims() {
            return Err(Error::Shape(format!(
                "posture has {} dims, coding has {}",
                posture.len(),
                self.dims()
            )));
        }
        let mut out = vec![0.0; self.dims() * self.bins];
        for (dim, &a) in posture.iter().enumerate() {
            let slot = &mut out[dim * self.bins..(dim + 1) * self.bins];
            self.encode_into(dim, a, ArrayViewMut1::from(slot))
                .map_err(|e| e.at(0, dim))?;
        }
        Ok(out)
    }

    /// Decode a flat `dims * bins` row back to a posture.
    pub fn decode_posture(&self, flat: ArrayView1<f64>) -> Result<Vec<f64>> {
        if flat.len() != self.dims() * self.bins {
            return Err(Error::Shape(format!(
                "flat output has {} entries, expected {}",
                flat.len(),
                self.dims() * self.bins
            )));
        }
        (0..self.dims())
            .map(|dim| {
                self.decode_probs(dim, flat.slice(ndarray::s![dim * self.bins..(dim + 1) * self.bins]))
            })
            .collect()
    }

    pub fn encode_trajectory(&self, traj: &Trajectory) -> Result<EncodedSequence> {
        if traj.dims() != self.dims() {
            return Err(Error::Shape(format!(
                "trajectory has {} dims, coding has {}",
                traj.dims(),
                self.dims()
            )));
        }
        let mut data = Array2::zeros((traj.steps(), self.dims() * self.bins));
        for (step, row) in traj.values.outer_iter().enumerate() {
            let mut out = data.row_mut(step);
            for (dim, &a) in row.iter().enumerate() {
                let slot = out.slice_mut(ndarray::s![dim * self.bins..(dim + 1) * self.bins]);
                self.encode_into(dim, a, slot).map_err(|e| e.at(step, dim))?;
            }
        }
        Ok(EncodedSequence {
            dims: self.dims(),
            bins: self.bins,
            data,
        })
    }

    pub fn decode_sequence(&self, seq: &EncodedSequence, rate_hz: f64) -> Result<Trajectory> {
        let mut values = Array2::zeros((seq.steps(), seq.dims));
        for (step, row) in seq.data.outer_iter().enumerate() {
            let posture = self.decode_posture(row)?;
            values.row_mut(step).assign(&ArrayView1::from(&posture[..]));
        }
        let limits = (0..self.dims()).map(|d| self.range(d)).collect();
        Trajectory::new(rate_hz, default_joint_names(self.dims()), limits, values)
    }
}

/// Encoded targets: one row per step, `dims * bins` columns, dimension-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedSequence {
    pub dims: usize,
    pub bins: usize,
    pub data: Array2<f64>,
}

impl EncodedSequence {
    pub fn steps(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.dims * self.bins
    }

    pub fn row(&self, step: usize) -> ArrayView1<'_, f64> {
        self.data.row(step)
    }
}

pub fn default_joint_names(dims: usize) -> Vec<String> {
    (0..dims).map(|j| format!("j{j}")).collect()
}

/// A sampled joint-space trajectory (`steps × dims`, radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryFile", into = "TrajectoryFile")]
pub struct Trajectory {
    pub rate_hz: f64,
    pub joint_names: Vec<String>,
    pub limits: Vec<(f64, f64)>,
    pub values: Array2<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct TrajectoryFile {
    rate_hz: f64,
    dims: usize,
    joint_names: Vec<String>,
    limits: Vec<[f64; 2]>,
    values: Vec<Vec<f64>>,
}

impl From<Trajectory> for TrajectoryFile {
    fn from(t: Trajectory) -> Self {
        Self {
            rate_hz: t.rate_hz,
            dims: t.dims(),
            limits: t.limits.iter().map(|&(lo, hi)| [lo, hi]).collect(),
            values: t.values.outer_iter().map(|r| r.to_vec()).collect(),
            joint_names: t.joint_names,
        }
    }
}

impl TryFrom<TrajectoryFile> for Trajectory {
    type Error = Error;

    fn try_from(file: TrajectoryFile) -> Result<Self> {
        let steps = file.values.len();
        if file.values.iter().any(|r| r.len() != file.dims) {
            return Err(Error::Shape(format!("every row must have {} values", file.dims)));
        }
        let flat: Vec<f64> = file.values.into_iter().flatten().collect();
        let values = Array2::from_shape_vec((steps, file.dims), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Trajectory::new(
            file.rate_hz,
            file.joint_names,
            file.limits.into_iter().map(|[lo, hi]| (lo, hi)).collect(),
            values,
        )
    }
}

impl Trajectory {
    pub fn new(
        rate_hz: f64,
        joint_names: Vec<String>,
        limits: Vec<(f64, f64)>,
        values: Array2<f64>,
    ) -> Result<Self> {
        let traj = Self {
            rate_hz,
            joint_names,
            limits,
            values,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::Config(format!("rate_hz must be positive, got {}", self.rate_hz)));
        }
        let (steps, dims) = self.values.dim();
        if steps == 0 || dims == 0 {
            return Err(Error::Shape("trajectory needs at least one step and one dim".into()));
        }
        if self.joint_names.len() != dims || self.limits.len() != dims {
            return Err(Error::Shape(format!(
                "{dims} dims but {} names and {} limits",
                self.joint_names.len(),
                self.limits.len()
            )));
        }
        for (dim, &(lo, hi)) in self.limits.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::Config(format!("joint {dim}: invalid limits [{lo}, {hi}]")));
            }
        }
        for ((step, dim), &v) in self.values.indexed_iter() {
            let (lo, hi) = self.limits[dim];
            if !(v >= lo && v <= hi) {
                return Err(Error::OutOfRange { value: v, lo, hi }.at(step, dim));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    pub fn posture(&self, step: usize) -> ArrayView1<'_, f64> {
        self.values.row(step)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: TrajectoryFile = serde_json::from_str(text)?;
        Self::try_from(file)
    }

    /// CSV with a one-line header of joint names. Rate and limits are not
    /// carried by the format and must be supplied.
    pub fn from_csv_reader<R: Read>(reader: R, rate_hz: f64, limits: Option<Vec<(f64, f64)>>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let dims = names.len();
        let mut flat = Vec::new();
        let mut steps = 0;
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != dims {
                return Err(Error::Shape(format!("row {steps} has {} fields, header has {dims}", rec.len())));
            }
            for field in rec.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {steps}: `{field}` is not a number")))?;
                flat.push(v);
            }
            steps += 1;
        }
        let values =
            Array2::from_shape_vec((steps, dims), flat).map_err(|e| Error::Shape(e.to_string()))?;
        let limits = limits.unwrap_or_else(|| vec![(-std::f64::consts::PI, std::f64::consts::PI); dims]);
        Self::new(rate_hz, names, limits, values)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.joint_names)?;
        for row in self.values.outer_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            Self::from_csv_reader(text.as_bytes(), 4.0, None)
        } else {
            Self::from_json_str(&text)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            self.write_csv(std::fs::File::create(path)?)
        } else {
            std::fs::write(path, self.to_json_string()?)?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn coding() -> SoftmaxCoding {
        SoftmaxCoding::symmetric(1, -1.0, 1.0, 11, 25.0).unwrap()
    }

    #[test]
    fn centers_span_range() {
        let c = coding();
        assert_eq!(c.centers(0).first(), Some(&-1.0));
        assert_eq!(c.centers(0).last(), Some(&1.0));
        assert!(c.centers(0).windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn sharp_encoding_at_center_is_one_hot() {
        let c = SoftmaxCoding::symmetric(1, -1.0, 1.0, 11, 1e4).unwrap();
        let p = c.encode_angle(0, c.centers(0)[3]).unwrap();
        assert!(p[3] > 1.0 - 1e-12);
        let total: f64 = p.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn midpoint_splits_mass_evenly() {
        let c = coding();
        let mid = 0.5 * (c.centers(0)[4] + c.centers(0)[5]);
        let p = c.encode_angle(0, mid).unwrap();
        assert_abs_diff_eq!(p[4], p[5], epsilon = 1e-12);
    }

    #[test]
    fn roundtrip_error_at_037_under_tenth_of_bin() {
        let c = coding();
        let p = c.encode_angle(0, 0.37).unwrap();
        let back = c.decode_probs(0, ArrayView1::from(&p[..])).unwrap();
        assert!((back - 0.37).abs() < c.bin_width(0) / 10.0, "{back}");
    }

    #[test]
    fn out_of_range_rejected() {
        let c = coding();
        assert!(matches!(c.encode_angle(0, 1.01), Err(Error::OutOfRange { .. })));
        assert!(c.encode_angle(0, f64::NAN).is_err());
    }

    #[test]
    fn decode_examples() {
        let c = coding();
        let mut onehot = vec![0.0; 11];
        onehot[7] = 1.0;
        assert_eq!(c.decode_probs(0, ArrayView1::from(&onehot[..])).unwrap(), c.centers(0)[7]);

        let uniform = vec![1.0 / 11.0; 11];
        assert_abs_diff_eq!(c.decode_probs(0, ArrayView1::from(&uniform[..])).unwrap(), 0.0, epsilon = 1e-12);

        let two = SoftmaxCoding::symmetric(1, -1.0, 1.0, 2, 1.0).unwrap();
        assert_abs_diff_eq!(two.decode_probs(0, array![0.25, 0.75].view()).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn malformed_probs_rejected() {
        let c = coding();
        assert!(c.decode_probs(0, ArrayView1::from(&[0.5; 11][..])).is_err());
        let mut neg = vec![0.0; 11];
        neg[0] = -0.1;
        neg[1] = 1.1;
        assert!(c.decode_probs(0, ArrayView1::from(&neg[..])).is_err());
        assert!(c.decode_probs(0, ArrayView1::from(&[1.0][..])).is_err());
    }

    #[test]
    fn trajectory_encoding_shape_and_rows() {
        let c = SoftmaxCoding::symmetric(2, -1.0, 1.0, 11, 25.0).unwrap();
        let values = Array2::from_shape_fn((4, 2), |(_, d)| 0.1 * d as f64);
        let traj = Trajectory::new(4.0, default_joint_names(2), vec![(-1.0, 1.0); 2], values).unwrap();
        let enc = c.encode_trajectory(&traj).unwrap();
        assert_eq!(enc.data.dim(), (4, 22));
        for s in 1..4 {
            assert_eq!(enc.row(s), enc.row(0));
        }
        let single = c.encode_angle(1, 0.1).unwrap();
        assert_eq!(enc.row(0).slice(ndarray::s![11..]).to_vec(), single);
    }

    #[test]
    fn trajectory_encoding_error_carries_index() {
        let c = SoftmaxCoding::symmetric(2, -0.5, 0.5, 11, 25.0).unwrap();
        let values = array![[0.0, 0.0], [0.0, 0.9]];
        let traj = Trajectory::new(4.0, default_joint_names(2), vec![(-1.0, 1.0); 2], values).unwrap();
        match c.encode_trajectory(&traj) {
            Err(Error::AtIndex { step: 1, dim: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sinusoid_roundtrip_mean_error() {
        // Oracle: decode by expectation, compare against the source angles.
        let c = coding();
        let n = 200;
        let errs: Vec<f64> = (0..n)
            .map(|i| {
                let a = 0.8 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin();
                let p = c.encode_angle(0, a).unwrap();
                (c.decode_probs(0, ArrayView1::from(&p[..])).unwrap() - a).abs()
            })
            .collect();
        let mean = errs.iter().sum::<f64>() / n as f64;
        assert!(mean < c.bin_width(0) / 10.0, "mean {mean}");
    }

    #[test]
    fn json_roundtrip_is_bit_exact() {
        let values = Array2::from_shape_fn((5, 3), |(s, d)| (s as f64 * 0.1 + d as f64).sin() * 0.3 + 1e-17);
        let traj = Trajectory::new(4.0, default_joint_names(3), vec![(-1.0, 1.0); 3], values).unwrap();
        let text = traj.to_json_string().unwrap();
        let back = Trajectory::from_json_str(&text).unwrap();
        assert_eq!(back, traj);
        for (a, b) in back.values.iter().zip(traj.values.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_with_header_parses() {
        let text = "a,b\n0.1,0.2\n0.3,-0.4\n";
        let traj = Trajectory::from_csv_reader(text.as_bytes(), 4.0, None).unwrap();
        assert_eq!(traj.joint_names, vec!["a", "b"]);
        assert_eq!(traj.values, array![[0.1, 0.2], [0.3, -0.4]]);
        let mut out = Vec::new();
        traj.write_csv(&mut out).unwrap();
        let again = Trajectory::from_csv_reader(&out[..], 4.0, None).unwrap();
        assert_eq!(again, traj);
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(Trajectory::from_json_str("{\"rate_hz\":4}").is_err());
        assert!(Trajectory::from_json_str(
            r#"{"rate_hz":4,"dims":2,"joint_names":["a","b"],"limits":[[-1,1],[-1,1]],"values":[[0.0]]}"#
        )
        .is_err());
        assert!(Trajectory::from_json_str(
            r#"{"rate_hz":4,"dims":1,"joint_names":["a"],"limits":[[-1,1]],"values":[[2.0]]}"#
        )
        .is_err());
        assert!(Trajectory::from_csv_reader("a\nx\n".as_bytes(), 4.0, None).is_err());
    }

    proptest! {
        #[test]
        fn encode_is_normalized_and_roundtrips(a in -1.0f64..=1.0) {
            let c = coding();
            let p = c.encode_angle(0, a).unwrap();
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let back = c.decode_probs(0, ArrayView1::from(&p[..])).unwrap();
            prop_assert!((back - a).abs() < c.bin_width(0));
        }

        #[test]
        fn decode_of_encode_is_monotone(a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
            let c = coding();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let dl = c.decode_probs(0, ArrayView1::from(&c.encode_angle(0, lo).unwrap()[..])).unwrap();
            let dh = c.decode_probs(0, ArrayView1::from(&c.encode_angle(0, hi).unwrap()[..])).unwrap();
            prop_assert!(dl <= dh + 1e-12);
        }
    }
}
