//! Seed-parallel rotation sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::majorization::{check_majorization, sinkhorn_fit, SimplexVector};
use super::{rotation_histograms, rotation_report};
use crate::entropy::HistogramSpec;
use crate::error::Result;
use crate::scan::synth::{sample, Distribution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationSweepConfig {
    pub seeds: Vec<u64>,
    pub d: usize,
    pub spec: HistogramSpec,
    pub distribution: Distribution,
    pub bandwidth: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for RotationSweepConfig {
    fn default() -> Self {
        Self {
            seeds: (0..35).collect(),
            d: 1024,
            spec: HistogramSpec::prototype_default(),
            distribution: Distribution::StudentT { dof: 3.0 },
            bandwidth: 2.0,
            max_iters: 1000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationRow {
    pub seed: u64,
    pub d: usize,
    #[serde(rename = "K")]
    pub bins: usize,
    pub pre_h: f64,
    pub post_h: f64,
    pub delta: f64,
    /// Sinkhorn `‖q − Bp‖₁` between the pre and post histograms.
    pub residual: f64,
    /// Whether the post histogram is majorized by the pre histogram.
    pub majorized: bool,
}

fn row(cfg: &RotationSweepConfig, seed: u64) -> Result<RotationRow> {
    let x = sample(cfg.distribution, seed, cfg.d)?;
    let report = rotation_report(&x, &cfg.spec)?;
    let (pre, post) = rotation_histograms(&x, &cfg.spec)?;
    let fit = sinkhorn_fit(&pre.masses, &post.masses, cfg.bandwidth, cfg.max_iters, cfg.tol)?;
    let verdict = check_majorization(&SimplexVector::new(post.masses)?, &SimplexVector::new(pre.masses)?)?;
    Ok(RotationRow {
        seed,
        d: cfg.d,
        bins: cfg.spec.bins,
        pre_h: report.pre_entropy,
        post_h: report.post_entropy,
        delta: report.delta,
        residual: fit.residual_l1,
        majorized: verdict.majorized,
    })
}

/// One row per seed, computed in parallel and returned in seed order.
pub fn rotation_sweep(cfg: &RotationSweepConfig) -> Result<Vec<RotationRow>> {
    cfg.spec.validate()?;
    cfg.distribution.validate()?;
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    seeds.par_iter().map(|&s| row(cfg, s)).collect()
}
