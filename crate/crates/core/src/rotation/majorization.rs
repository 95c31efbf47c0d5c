//! Histogram mixing, majorization and Sinkhorn scaling.
//!
//! If `q = Bp` for a doubly-stochastic `B`, then `q` is majorized by `p` and
//! `H(q) ≥ H(p)`. The prefix-sum test below decides majorization exactly (up
//! to a fixed tolerance), which by Hardy-Littlewood-Pólya is the same as the
//! existence of such a `B`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack on prefix-sum comparisons and simplex totals.
pub const MAJORIZATION_TOL: f64 = 1e-10;

/// Tolerance on row and column sums accepted by [`mix_histogram`].
const MIXING_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexVector {
    masses: Vec<f64>,
}

impl SimplexVector {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::NoSamples);
        }
        if let Some(i) = masses.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidParameter(format!("mass {i} is negative or non-finite")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MAJORIZATION_TOL {
            return Err(Error::InvalidParameter(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { masses })
    }

    pub fn uniform(m: usize) -> Self {
        Self {
            masses: vec![1.0 / m as f64; m],
        }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        shannon_entropy(&self.masses)
    }
}

/// `−Σ p ln p` over nonzero masses.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Square nonnegative matrix with its measured marginal errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingMatrix {
    m: usize,
    /// Row-major.
    entries: Vec<f64>,
    pub row_err: f64,
    pub col_err: f64,
}

impl MixingMatrix {
    pub fn new(m: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != m * m {
            return Err(Error::DimensionMismatch {
                left: entries.len(),
                right: m * m,
            });
        }
        if entries.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("mixing entries must be finite and nonnegative".into()));
        }
        let mut b = Self {
            m,
            entries,
            row_err: 0.0,
            col_err: 0.0,
        };
        b.refresh_errors();
        Ok(b)
    }

    pub fn identity(m: usize) -> Self {
        let mut e = vec![0.0; m * m];
        for i in 0..m {
            e[i * m + i] = 1.0;
        }
        Self::new(m, e).expect("identity is valid")
    }

    /// Every entry `1/m`.
    pub fn uniform(m: usize) -> Self {
        Self::new(m, vec![1.0 / m as f64; m * m]).expect("uniform is valid")
    }

    /// `Σ_k w_k P_k` where `perms[k][i]` is the column holding row `i`'s one.
    /// Weights are normalized to sum to one.
    pub fn permutation_mixture(m: usize, perms: &[Vec<usize>], weights: &[f64]) -> Result<Self> {
        if perms.len() != weights.len() || perms.is_empty() {
            return Err(Error::DimensionMismatch {
                left: perms.len(),
                right: weights.len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidParameter("mixture weights must be nonnegative with a positive sum".into()));
        }
        let mut e = vec![0.0; m * m];
        for (perm, w) in perms.iter().zip(weights) {
            let mut seen = vec![false; m];
            if perm.len() != m || perm.iter().any(|&j| j >= m || std::mem::replace(&mut seen[j], true)) {
                return Err(Error::InvalidParameter(format!("{perm:?} is not a permutation of 0..{m}")));
            }
            for (i, &j) in perm.iter().enumerate() {
                e[i * m + j] += w / total;
            }
        }
        Self::new(m, e)
    }

    /// A mixture of `terms` uniformly random permutations with random weights.
    pub fn random_permutation_mixture(m: usize, terms: usize, rng: &mut impl Rng) -> Result<Self> {
        let perms: Vec<Vec<usize>> = (0..terms)
            .map(|_| {
                let mut p: Vec<usize> = (0..m).collect();
                p.shuffle(rng);
                p
            })
            .collect();
        let weights: Vec<f64> = (0..terms).map(|_| rng.random_range(0.05..1.0)).collect();
        Self::permutation_mixture(m, &perms, &weights)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    fn refresh_errors(&mut self) {
        let m = self.m;
        let mut row_err: f64 = 0.0;
        let mut col = vec![0.0; m];
        for i in 0..m {
            let row = &self.entries[i * m..(i + 1) * m];
            row_err = row_err.max((row.iter().sum::<f64>() - 1.0).abs());
            for (c, v) in col.iter_mut().zip(row) {
                *c += v;
            }
        }
        self.row_err = row_err;
        self.col_err = col.iter().fold(0.0, |e: f64, c| e.max((c - 1.0).abs()));
    }

    /// `B·p` without any stochasticity check.
    pub fn apply(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.m {
            return Err(Error::DimensionMismatch {
                left: self.m,
                right: p.len(),
            });
        }
        Ok((0..self.m)
            .map(|i| {
                self.entries[i * self.m..(i + 1) * self.m]
                    .iter()
                    .zip(p)
                    .map(|(b, x)| b * x)
                    .sum()
            })
            .collect())
    }
}

/// `q = B·p` for a doubly-stochastic `B`.
pub fn mix_histogram(p: &SimplexVector, b: &MixingMatrix) -> Result<SimplexVector> {
    if b.row_err > MIXING_TOL || b.col_err > MIXING_TOL {
        return Err(Error::NotDoublyStochastic {
            row_err: b.row_err,
            col_err: b.col_err,
        });
    }
    let q = b.apply(p.masses())?;
    Ok(SimplexVector { masses: q })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MajorizationVerdict {
    /// `q ≺ p`.
    pub majorized: bool,
    /// Largest `prefix_q(k) − prefix_p(k)`; at most the tolerance when majorized.
    pub max_excess: f64,
    /// First prefix length (1-based) that fails, if any.
    pub first_violation: Option<usize>,
}

/// Decides `q ≺ p` by comparing descending prefix sums.
pub fn check_majorization(q: &SimplexVector, p: &SimplexVector) -> Result<MajorizationVerdict> {
    if q.len() != p.len() {
        return Err(Error::DimensionMismatch {
            left: q.len(),
            right: p.len(),
        });
    }
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    };
    let (qs, ps) = (sorted(q.masses()), sorted(p.masses()));
    let (mut sq, mut sp) = (0.0, 0.0);
    let mut max_excess = f64::NEG_INFINITY;
    let mut first_violation = None;
    for k in 0..qs.len() {
        sq += qs[k];
        sp += ps[k];
        let excess = sq - sp;
        max_excess = max_excess.max(excess);
        if excess > MAJORIZATION_TOL && first_violation.is_none() {
            first_violation = Some(k + 1);
        }
    }
    if (sq - sp).abs() > MAJORIZATION_TOL && first_violation.is_none() {
        first_violation = Some(qs.len());
    }
    Ok(MajorizationVerdict {
        majorized: first_violation.is_none(),
        max_excess,
        first_violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkhornFit {
    pub matrix: MixingMatrix,
    /// `‖q − B·p‖₁`.
    pub residual_l1: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Scales the Gaussian bin kernel `exp(−(i−j)²/(2·bw²))` to doubly-stochastic
/// form by alternating row and column normalization.
///
/// Running out of iterations is reported through `converged`, not an error.
pub fn sinkhorn_fit(p: &[f64], q: &[f64], bandwidth: f64, max_iters: usize, tol: f64) -> Result<SinkhornFit> {
    let m = p.len();
    if q.len() != m {
        return Err(Error::DimensionMismatch { left: m, right: q.len() });
    }
    if m == 0 {
        return Err(Error::NoSamples);
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidParameter(format!("bandwidth {bandwidth} must be positive")));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }

    let mut e: Vec<f64> = (0..m * m)
        .map(|idx| {
            let d = (idx / m) as f64 - (idx % m) as f64;
            (-d * d / (2.0 * bandwidth * bandwidth)).exp()
        })
        .collect();

    let mut iterations = 0;
    let mut b = MixingMatrix::new(m, e.clone())?;
    while !(b.row_err <= tol && b.col_err <= tol) && iterations < max_iters {
        for i in 0..m {
            let row = &mut e[i * m..(i + 1) * m];
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        for j in 0..m {
            let s: f64 = (0..m).map(|i| e[i * m + j]).sum();
            (0..m).for_each(|i| e[i * m + j] /= s);
        }
        iterations += 1;
        b = MixingMatrix::new(m, e.clone())?;
    }

    let bp = b.apply(p)?;
    let residual_l1 = q.iter().zip(&bp).map(|(a, b)| (a - b).abs()).sum();
    Ok(SinkhornFit {
        converged: b.row_err <= tol && b.col_err <= tol,
        matrix: b,
        residual_l1,
        iterations,
    })
}

#[cfg(test)]
fn random_simplex(m: usize, seed: u64) -> SimplexVector {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    SimplexVector {
        masses: raw.iter().map(|v| v / total).collect(),
    }
}
