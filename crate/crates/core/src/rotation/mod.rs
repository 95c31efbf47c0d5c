//! Walsh-Hadamard rotation diagnostics.
//!
//! The orthonormal transform in Sylvester order keeps the `ℓ2` norm, caps the
//! peak at `‖x‖₁/√d`, and moves the mean into the first coordinate
//! (`z₁ = √d·μ`). That last property is what can shrink histogram entropy
//! after rotation: a large first coordinate stretches the dynamic range and
//! squeezes everything else into a few bins.

mod majorization;
mod sweep;

pub use majorization::{
    check_majorization, mix_histogram, shannon_entropy, sinkhorn_fit, MajorizationVerdict, MixingMatrix,
    SimplexVector, SinkhornFit, MAJORIZATION_TOL,
};
pub use sweep::{rotation_sweep, RotationRow, RotationSweepConfig};

use serde::{Deserialize, Serialize};

use crate::entropy::{estimate_entropy, histogram_of, Histogram, HistogramSpec};
use crate::error::{Error, Result};

/// Normalized transform in place.
pub fn fwht_in_place(x: &mut [f64]) -> Result<()> {
    let n = x.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (x[j], x[j + h]);
                x[j] = a + b;
                x[j + h] = a - b;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / (n as f64).sqrt();
    for v in x.iter_mut() {
        *v *= scale;
    }
    Ok(())
}

pub fn fwht(x: &[f64]) -> Result<Vec<f64>> {
    let mut z = x.to_vec();
    fwht_in_place(&mut z)?;
    Ok(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationReport {
    pub pre_entropy: f64,
    pub post_entropy: f64,
    /// `post − pre`.
    pub delta: f64,
    pub peak_pre: f64,
    pub peak_post: f64,
    pub l2_pre: f64,
    pub l2_post: f64,
    pub dc_coordinate: f64,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn peak(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Dynamic-range histograms of `x` and of its rotation.
pub fn rotation_histograms(x: &[f64], spec: &HistogramSpec) -> Result<(Histogram, Histogram)> {
    let z = fwht(x)?;
    Ok((histogram_of(x, spec)?, histogram_of(&z, spec)?))
}

pub fn rotation_report(x: &[f64], spec: &HistogramSpec) -> Result<RotationReport> {
    let z = fwht(x)?;
    let pre = estimate_entropy(&histogram_of(x, spec)?, spec.epsilon)?.raw_nats;
    let post = estimate_entropy(&histogram_of(&z, spec)?, spec.epsilon)?.raw_nats;
    Ok(RotationReport {
        pre_entropy: pre,
        post_entropy: post,
        delta: post - pre,
        peak_pre: peak(x),
        peak_post: peak(&z),
        l2_pre: l2(x),
        l2_post: l2(&z),
        dc_coordinate: z[0],
    })
}
