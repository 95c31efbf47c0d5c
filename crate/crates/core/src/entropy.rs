//! Fixed-bin histogram entropy over activation tensors.
//!
//! A histogram spreads `K` equal-width bins over either the dynamic
//! `[min, max]` range of the (optionally strided) values or a fixed range.
//! The entropy estimate is
//!
//! ```text
//! H = -Σ_k p_k · ln(p_k + ε)
//! ```
//!
//! and is reported both in raw nats and normalized by the ceiling `ln K`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default stability constant for 256-bin runtime estimates.
pub const DEFAULT_EPSILON: f64 = 1e-8;
/// Stability constant used with the 64-bin prototype estimator.
pub const PROTOTYPE_EPSILON: f64 = 1e-12;

/// A flat buffer of activations with its logical shape.
///
/// The last shape extent is treated as the sequence (token) axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationTensor {
    values: Vec<f64>,
    shape: Vec<usize>,
}

impl ActivationTensor {
    pub fn new(values: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} must have positive extents"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { values, shape })
    }

    /// A one-dimensional tensor.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![n])
    }

    /// Decodes little-endian `f32` values.
    pub fn from_f32_le(bytes: &[u8], shape: Vec<usize>) -> Result<Self> {
        if !bytes.len().is_multiple_of(4) {
            return Err(Error::ShapeMismatch(format!(
                "{} bytes is not a whole number of f32 values",
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        Self::new(values, shape)
    }

    /// Decodes little-endian `f64` values.
    pub fn from_f64_le(bytes: &[u8], shape: Vec<usize>) -> Result<Self> {
        if !bytes.len().is_multiple_of(8) {
            return Err(Error::ShapeMismatch(format!(
                "{} bytes is not a whole number of f64 values",
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect();
        Self::new(values, shape)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Extent of the last (sequence) axis.
    pub fn seq_len(&self) -> usize {
        *self.shape.last().expect("shape is non-empty")
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RangeMode {
    /// Per-tensor `[min, max]`.
    Dynamic,
    /// A fixed `[lo, hi]`; values outside are clamped into the edge bins.
    Fixed { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bins: usize,
    pub epsilon: f64,
    pub range: RangeMode,
    pub stride: usize,
}

impl HistogramSpec {
    pub fn new(bins: usize, epsilon: f64) -> Result<Self> {
        let spec = Self {
            bins,
            epsilon,
            range: RangeMode::Dynamic,
            stride: 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 256 bins, `ε = 1e-8`, dynamic range, full histogram.
    pub fn runtime_default() -> Self {
        Self::new(256, DEFAULT_EPSILON).expect("valid default")
    }

    /// 64 bins, `ε = 1e-12`.
    pub fn prototype_default() -> Self {
        Self::new(64, PROTOTYPE_EPSILON).expect("valid default")
    }

    pub fn with_stride(mut self, stride: usize) -> Result<Self> {
        self.stride = stride;
        self.validate()?;
        Ok(self)
    }

    pub fn with_fixed_range(mut self, lo: f64, hi: f64) -> Result<Self> {
        self.range = RangeMode::Fixed { lo, hi };
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::DegenerateSpec(format!(
                "bin count {} must be at least 2",
                self.bins
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::DegenerateSpec(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        if self.stride == 0 {
            return Err(Error::DegenerateSpec("stride must be at least 1".into()));
        }
        if let RangeMode::Fixed { lo, hi } = self.range {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::DegenerateSpec(format!(
                    "fixed range [{lo}, {hi}] must satisfy lo < hi"
                )));
            }
        }
        Ok(())
    }

    /// The entropy ceiling `ln K`.
    pub fn log_bins(&self) -> f64 {
        (self.bins as f64).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub masses: Vec<f64>,
    pub range: (f64, f64),
    pub sample_count: usize,
    pub spec: HistogramSpec,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.masses.len()
    }
}

/// Builds the fixed-bin histogram of a tensor.
pub fn compute_histogram(tensor: &ActivationTensor, spec: &HistogramSpec) -> Result<Histogram> {
    histogram_of(tensor.values(), spec)
}

/// Builds the fixed-bin histogram of a raw value slice.
///
/// Every `stride`-th value in storage order is used, both for the dynamic
/// range and for the counts. Value `v` lands in bin
/// `floor((v - lo) / (hi - lo) * K)`, clamped to `K - 1`. A collapsed range
/// puts all mass in bin 0.
pub fn histogram_of(values: &[f64], spec: &HistogramSpec) -> Result<Histogram> {
    spec.validate()?;
    let stride = spec.stride;
    let n = values.len().div_ceil(stride);
    if n == 0 {
        return Err(Error::NoSamples);
    }

    let (lo, hi) = match spec.range {
        RangeMode::Fixed { lo, hi } => {
            if let Some(i) = values.iter().step_by(stride).position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(i * stride));
            }
            (lo, hi)
        }
        RangeMode::Dynamic => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (i, &v) in values.iter().step_by(stride).enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite(i * stride));
                }
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        }
    };

    let k = spec.bins;
    let mut counts = vec![0u64; k];
    let width = hi - lo;
    if width > 0.0 {
        let scale = k as f64 / width;
        for &v in values.iter().step_by(stride) {
            let pos = ((v - lo) * scale).floor();
            let idx = if pos <= 0.0 {
                0
            } else {
                (pos as usize).min(k - 1)
            };
            counts[idx] += 1;
        }
    } else {
        counts[0] = n as u64;
    }

    let total = n as f64;
    let masses = counts.iter().map(|&c| c as f64 / total).collect();
    Ok(Histogram {
        masses,
        range: (lo, hi),
        sample_count: n,
        spec: *spec,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub raw_nats: f64,
    pub normalized: f64,
    pub spec: HistogramSpec,
    pub sample_count: usize,
}

impl EntropyEstimate {
    /// The flat JSON record emitted by the CLI.
    pub fn record(&self) -> EntropyRecord {
        EntropyRecord {
            raw_nats: self.raw_nats,
            normalized: self.normalized,
            bins: self.spec.bins,
            epsilon: self.spec.epsilon,
            stride: self.spec.stride,
            sample_count: self.sample_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyRecord {
    pub raw_nats: f64,
    pub normalized: f64,
    #[serde(rename = "K")]
    pub bins: usize,
    pub epsilon: f64,
    pub stride: usize,
    pub sample_count: usize,
}

/// Shannon entropy of a histogram with the `ε`-stabilised logarithm.
///
/// Zero-mass bins contribute nothing. A single occupied bin gives
/// `-ln(1 + ε)`, a tiny negative number rather than exactly zero.
pub fn estimate_entropy(hist: &Histogram, epsilon: f64) -> Result<EntropyEstimate> {
    let k = hist.bins();
    if k < 2 {
        return Err(Error::DegenerateSpec(format!("bin count {k} must be at least 2")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::DegenerateSpec(format!("epsilon {epsilon} must be positive")));
    }
    let raw: f64 = -hist
        .masses
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * (p + epsilon).ln())
        .sum::<f64>();
    let mut spec = hist.spec;
    spec.epsilon = epsilon;
    Ok(EntropyEstimate {
        raw_nats: raw,
        normalized: raw / (k as f64).ln(),
        spec,
        sample_count: hist.sample_count,
    })
}

/// Histogram plus entropy in one call, using the histogram's own `ε`.
pub fn entropy_of(tensor: &ActivationTensor, spec: &HistogramSpec) -> Result<EntropyEstimate> {
    let hist = compute_histogram(tensor, spec)?;
    estimate_entropy(&hist, spec.epsilon)
}

/// Token-level entropy: one dynamic-range histogram per sequence position
/// (taken over every value at that position), averaged over positions.
///
/// `position_stride` skips positions; the per-position histograms always use
/// every value at the position. The returned `sample_count` is the number of
/// values that entered any histogram.
pub fn token_entropy(
    tensor: &ActivationTensor,
    spec: &HistogramSpec,
    position_stride: usize,
) -> Result<EntropyEstimate> {
    if position_stride == 0 {
        return Err(Error::DegenerateSpec("position stride must be at least 1".into()));
    }
    let per_position = HistogramSpec { stride: 1, ..*spec };
    let len = tensor.seq_len();
    let rows = tensor.len() / len;
    let values = tensor.values();

    let mut column = Vec::with_capacity(rows);
    let mut total = 0.0;
    let mut positions = 0usize;
    for t in (0..len).step_by(position_stride) {
        column.clear();
        column.extend((0..rows).map(|r| values[r * len + t]));
        let hist = histogram_of(&column, &per_position)?;
        total += estimate_entropy(&hist, spec.epsilon)?.raw_nats;
        positions += 1;
    }
    let raw = total / positions as f64;
    Ok(EntropyEstimate {
        raw_nats: raw,
        normalized: raw / spec.log_bins(),
        spec: HistogramSpec {
            stride: position_stride,
            ..*spec
        },
        sample_count: positions * rows,
    })
}

/// Exponential moving average of entropy estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmaState {
    current: f64,
    decay: f64,
    update_count: u64,
}

impl EmaState {
    pub fn new(decay: f64, initial: f64) -> Result<Self> {
        check_decay(decay)?;
        Ok(Self {
            current: initial,
            decay,
            update_count: 0,
        })
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    /// `H_t = λ·H_{t-1} + (1 - λ)·h`.
    pub fn update(self, h: f64) -> Result<Self> {
        check_decay(self.decay)?;
        Ok(Self {
            current: self.decay * self.current + (1.0 - self.decay) * h,
            decay: self.decay,
            update_count: self.update_count + 1,
        })
    }
}

fn check_decay(decay: f64) -> Result<()> {
    if (0.0..1.0).contains(&decay) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "EMA decay {decay} must lie in [0, 1)"
        )))
    }
}

/// Cheap summary statistics used by the moment-proxy schedulers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub mean_abs: f64,
    pub variance: f64,
    /// Pearson kurtosis `m4 / m2²` (3 for a Gaussian); 0 for constant input.
    pub kurtosis: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::NoSamples);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let mut m2 = 0.0;
        let mut m4 = 0.0;
        let mut abs = 0.0;
        for &v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m4 += d2 * d2;
            abs += v.abs();
        }
        m2 /= n;
        m4 /= n;
        Ok(Self {
            mean,
            mean_abs: abs / n,
            variance: m2,
            kurtosis: if m2 > 0.0 { m4 / (m2 * m2) } else { 0.0 },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn constant_input_collapses_to_bin_zero() {
        let t = ActivationTensor::from_vec(vec![3.0; 1000]).unwrap();
        let spec = HistogramSpec::runtime_default();
        let h = compute_histogram(&t, &spec).unwrap();
        assert_eq!(h.masses[0], 1.0);
        assert!(h.masses[1..].iter().all(|&p| p == 0.0));
        let e = estimate_entropy(&h, 1e-8).unwrap();
        assert!(e.raw_nats.abs() <= 1e-7);
        assert!(e.normalized.abs() <= 1e-7);
    }

    #[test]
    fn two_point_split() {
        let t = ActivationTensor::from_vec(vec![0.0, 1.0]).unwrap();
        let h = compute_histogram(&t, &HistogramSpec::new(2, 1e-8).unwrap()).unwrap();
        assert_eq!(h.masses, vec![0.5, 0.5]);
    }

    #[test]
    fn maximum_lands_in_last_bin() {
        let h = histogram_of(&[0.0, 0.25, 1.0], &HistogramSpec::new(4, 1e-8).unwrap()).unwrap();
        assert_eq!(h.masses[3], 1.0 / 3.0);
        assert_eq!(h.masses[1], 1.0 / 3.0);
    }

    #[test]
    fn empty_and_non_finite_inputs_are_rejected() {
        let spec = HistogramSpec::runtime_default();
        assert_eq!(histogram_of(&[], &spec), Err(Error::NoSamples));
        assert_eq!(histogram_of(&[1.0, f64::NAN], &spec), Err(Error::NonFinite(1)));
        assert_eq!(
            histogram_of(&[1.0, f64::INFINITY], &spec),
            Err(Error::NonFinite(1))
        );
        assert!(ActivationTensor::from_vec(vec![f64::NAN]).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(HistogramSpec::new(1, 1e-8).is_err());
        assert!(HistogramSpec::new(2, 0.0).is_err());
        assert!(HistogramSpec::runtime_default().with_stride(0).is_err());
        assert!(HistogramSpec::runtime_default().with_fixed_range(1.0, 1.0).is_err());
    }

    #[test]
    fn uniform_masses_match_an_independent_count() {
        let values = uniform(1_000_000, 11);
        let h = histogram_of(&values, &HistogramSpec::runtime_default()).unwrap();

        // Independent pass: bin by integer arithmetic on the observed range.
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut counts = [0usize; 256];
        for &v in &values {
            let b = (((v - lo) / (hi - lo)) * 256.0) as usize;
            counts[b.min(255)] += 1;
        }
        for (k, (&p, &c)) in h.masses.iter().zip(counts.iter()).enumerate() {
            assert_eq!(p, c as f64 / 1e6, "bin {k}");
            assert!((p - 1.0 / 256.0).abs() < 0.005);
        }
    }

    #[test]
    fn fixed_range_clamps_outliers() {
        let spec = HistogramSpec::new(4, 1e-8)
            .unwrap()
            .with_fixed_range(0.0, 1.0)
            .unwrap();
        let h = histogram_of(&[-5.0, 0.1, 0.6, 9.0], &spec).unwrap();
        assert_eq!(h.masses, vec![0.5, 0.0, 0.25, 0.25]);
    }

    #[test]
    fn stride_takes_every_nth_in_storage_order() {
        let values: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let spec = HistogramSpec::new(2, 1e-8).unwrap().with_stride(3).unwrap();
        let h = histogram_of(&values, &spec).unwrap();
        // 0, 3, 6, 9 over [0, 9]
        assert_eq!(h.sample_count, 4);
        assert_eq!(h.range, (0.0, 9.0));
        assert_eq!(h.masses, vec![0.5, 0.5]);
    }

    #[test]
    fn token_entropy_averages_positions() {
        // Two channels, three positions. Position 1 is constant.
        let t = ActivationTensor::new(vec![0.0, 5.0, 0.0, 1.0, 5.0, 1.0], vec![2, 3]).unwrap();
        let spec = HistogramSpec::new(2, 1e-12).unwrap();
        let e = token_entropy(&t, &spec, 1).unwrap();
        let two_point = -2.0 * 0.5 * (0.5f64 + 1e-12).ln();
        let single = -(1.0f64 + 1e-12).ln();
        let expected = (two_point + single + two_point) / 3.0;
        assert!((e.raw_nats - expected).abs() < 1e-15);
        assert_eq!(e.sample_count, 6);

        let strided = token_entropy(&t, &spec, 2).unwrap();
        assert!((strided.raw_nats - two_point).abs() < 1e-15);
    }

    #[test]
    fn ema_arithmetic() {
        let s = EmaState::new(0.85, 4.0).unwrap().update(5.0).unwrap();
        assert!((s.current() - 4.15).abs() < 1e-12);
        assert_eq!(s.update_count(), 1);

        let s = EmaState::new(0.0, 123.0).unwrap().update(2.5).unwrap();
        assert_eq!(s.current(), 2.5);

        assert!(EmaState::new(1.0, 0.0).is_err());
        assert!(EmaState::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn ema_horizon() {
        let mut s = EmaState::new(0.85, 0.0).unwrap();
        for _ in 0..7 {
            s = s.update(5.0).unwrap();
        }
        let closed_form = 5.0 * (1.0 - 0.85f64.powi(7));
        assert!((s.current() - closed_form).abs() < 1e-12);
        assert!(5.0 - s.current() <= 5.0 * 0.85f64.powi(7) + 1e-12);
        assert!((5.0 * 0.85f64.powi(7) - 1.60).abs() < 0.01);
    }

    #[test]
    fn moments_of_known_sample() {
        let m = Moments::of(&[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(m.mean, 0.0);
        assert_eq!(m.mean_abs, 1.0);
        assert_eq!(m.variance, 1.0);
        assert_eq!(m.kurtosis, 1.0);
        assert_eq!(Moments::of(&[2.0; 3]).unwrap().kurtosis, 0.0);
    }

    #[test]
    fn binary_decoding() {
        let bytes: Vec<u8> = [1.5f32, -2.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        let t = ActivationTensor::from_f32_le(&bytes, vec![2]).unwrap();
        assert_eq!(t.values(), &[1.5, -2.0]);
        let bytes: Vec<u8> = [0.1f64].iter().flat_map(|v| v.to_le_bytes()).collect();
        assert_eq!(ActivationTensor::from_f64_le(&bytes, vec![1]).unwrap().values(), &[0.1]);
        assert!(ActivationTensor::from_f32_le(&[0u8; 3], vec![1]).is_err());
        assert!(ActivationTensor::from_f64_le(&[0u8; 8], vec![2]).is_err());
    }
}
