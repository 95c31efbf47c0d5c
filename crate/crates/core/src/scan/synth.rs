//! Seeded synthetic activations and scan parameters.

use rand::distr::{Distribution as _, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use super::{Coef, ScanParams};
use crate::entropy::ActivationTensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    /// `U[0, 1)`.
    Uniform,
    StandardNormal,
    Normal { mean: f64, std: f64 },
    Laplace { scale: f64 },
    /// Standard-normal values kept at a `fraction` of positions, zero elsewhere.
    Sparse { fraction: f64 },
    StudentT { dof: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match *self {
            Distribution::Normal { mean, std } if !(mean.is_finite() && std > 0.0 && std.is_finite()) => {
                bad(format!("normal(mean={mean}, std={std}) needs finite mean and positive std"))
            }
            Distribution::Laplace { scale } if !(scale > 0.0 && scale.is_finite()) => {
                bad(format!("laplace scale {scale} must be positive"))
            }
            Distribution::Sparse { fraction } if !(fraction > 0.0 && fraction <= 1.0) => {
                bad(format!("nonzero fraction {fraction} must lie in (0, 1]"))
            }
            Distribution::StudentT { dof } if !(dof > 0.0 && dof.is_finite()) => {
                bad(format!("degrees of freedom {dof} must be positive"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub distribution: Distribution,
    pub seed: u64,
    pub shape: Vec<usize>,
}

impl SyntheticSpec {
    pub fn new(distribution: Distribution, seed: u64, shape: Vec<usize>) -> Result<Self> {
        distribution.validate()?;
        Ok(Self {
            distribution,
            seed,
            shape,
        })
    }
}

/// Draws `n` values. The sparse mask comes from a second ChaCha stream of the
/// same seed, so the value sequence never depends on the density.
pub fn sample(distribution: Distribution, seed: u64, n: usize) -> Result<Vec<f64>> {
    distribution.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = match distribution {
        Distribution::Uniform => (0..n).map(|_| rng.random::<f64>()).collect(),
        Distribution::StandardNormal => normals(&mut rng, n),
        Distribution::Normal { mean, std } => normals(&mut rng, n).into_iter().map(|z| mean + std * z).collect(),
        Distribution::Laplace { scale } => (0..n)
            .map(|_| {
                let u: f64 = Open01.sample(&mut rng);
                let u = u - 0.5;
                -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
            .collect(),
        Distribution::Sparse { fraction } => {
            let mut mask = ChaCha8Rng::seed_from_u64(seed);
            mask.set_stream(1);
            normals(&mut rng, n)
                .into_iter()
                .map(|z| if mask.random_bool(fraction) { z } else { 0.0 })
                .collect()
        }
        Distribution::StudentT { dof } => {
            let t = StudentT::new(dof).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            (0..n).map(|_| t.sample(&mut rng)).collect()
        }
    };
    Ok(values)
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn generate_activations(spec: &SyntheticSpec) -> Result<ActivationTensor> {
    let n = spec.shape.iter().product();
    ActivationTensor::new(sample(spec.distribution, spec.seed, n)?, spec.shape.clone())
}

/// Stable random parameters: per-step decays in `[0.5, 1)`, `B`, `C`, `D`
/// in `[-1, 1)` and standard-normal inputs.
pub fn random_scan_params(d: usize, d_state: usize, len: usize, seed: u64) -> Result<ScanParams<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sym = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let b = sym(len * d_state);
    let c = sym(len * d_state);
    let skip = sym(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let a = (0..len * d * d_state).map(|_| rng.random_range(0.5..1.0)).collect();
    let x = normals(&mut rng, d * len);
    let p = ScanParams {
        d,
        d_state,
        len,
        a: Coef::PerStep(a),
        b: Coef::PerStep(b),
        c: Coef::PerStep(c),
        skip,
        x,
    };
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{entropy_of, HistogramSpec};

    #[test]
    fn deterministic_per_seed() {
        for dist in [
            Distribution::Uniform,
            Distribution::Laplace { scale: 1.0 },
            Distribution::StudentT { dof: 3.0 },
        ] {
            assert_eq!(sample(dist, 4, 100).unwrap(), sample(dist, 4, 100).unwrap());
            assert_ne!(sample(dist, 4, 100).unwrap(), sample(dist, 5, 100).unwrap());
        }
    }

    #[test]
    fn full_density_sparse_is_standard_normal() {
        assert_eq!(
            sample(Distribution::Sparse { fraction: 1.0 }, 8, 10_000).unwrap(),
            sample(Distribution::StandardNormal, 8, 10_000).unwrap()
        );
    }

    #[test]
    fn sparse_count_within_binomial_band() {
        let n = 1_000_000;
        let v = sample(Distribution::Sparse { fraction: 0.1 }, 3, n).unwrap();
        let nz = v.iter().filter(|&&x| x != 0.0).count() as f64;
        let sigma = (n as f64 * 0.1 * 0.9).sqrt();
        assert!((nz - 0.1 * n as f64).abs() <= 3.0 * sigma, "nonzero count {nz}");
    }

    #[test]
    fn uniform_entropy_at_256_bins() {
        let t = generate_activations(&SyntheticSpec::new(Distribution::Uniform, 0, vec![1_000_000]).unwrap()).unwrap();
        let e = entropy_of(&t, &HistogramSpec::runtime_default()).unwrap();
        assert!((e.raw_nats - 5.545).abs() < 0.01, "{}", e.raw_nats);
    }

    #[test]
    fn laplace_moments() {
        let v = sample(Distribution::Laplace { scale: 2.0 }, 1, 200_000).unwrap();
        let mean_abs = v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
        assert!((mean_abs - 2.0).abs() < 0.03);
    }

    #[test]
    fn invalid_specs() {
        assert!(SyntheticSpec::new(Distribution::Sparse { fraction: 0.0 }, 0, vec![4]).is_err());
        assert!(SyntheticSpec::new(Distribution::Sparse { fraction: 1.5 }, 0, vec![4]).is_err());
        assert!(SyntheticSpec::new(Distribution::Laplace { scale: -1.0 }, 0, vec![4]).is_err());
        assert!(SyntheticSpec::new(Distribution::StudentT { dof: 0.0 }, 0, vec![4]).is_err());
    }

    #[test]
    fn random_params_are_stable() {
        let p = random_scan_params(2, 4, 16, 0).unwrap();
        match &p.a {
            Coef::PerStep(a) => assert!(a.iter().all(|&v| (0.5..1.0).contains(&v))),
            Coef::Constant(_) => unreachable!(),
        }
    }
}
