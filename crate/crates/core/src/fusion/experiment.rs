//! Synthetic operator chains and the launch-count sweep.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    no_fusion, solve_dp, solve_greedy_threshold, static_fusion, surrogate_dispatch_latency, FusionPlan,
    FusionWeights, OperatorChain, OperatorDesc, ResourceBudget,
};
use crate::error::{Error, Result};

/// Per-launch cost derived from 3.299 ms over 64 calls.
pub const DEFAULT_PER_CALL_MS: f64 = 0.05155;

pub const SWEEP_LENGTHS: [usize; 5] = [4, 8, 16, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Low,
    Mixed,
    High,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Low, Regime::Mixed, Regime::High];

    /// Entry-entropy band in nats.
    pub fn band(self) -> (f64, f64) {
        match self {
            Regime::Low => (1.5, 1.9),
            Regime::Mixed => (2.0, 2.8),
            Regime::High => (3.5, 4.6),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Low => "low",
            Regime::Mixed => "mixed",
            Regime::High => "high",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Regime::Low),
            "mixed" => Ok(Regime::Mixed),
            "high" => Ok(Regime::High),
            _ => Err(Error::InvalidParameter(format!("unknown regime {s:?}"))),
        }
    }
}

/// Shape parameters for generated chains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainShape {
    pub ai_range: (f64, f64),
    pub traffic_range: (f64, f64),
    pub shared_mem_cost: f64,
    pub register_cost: f64,
}

impl Default for ChainShape {
    fn default() -> Self {
        Self {
            ai_range: (0.5, 2.0),
            traffic_range: (0.5, 1.5),
            shared_mem_cost: 16.0,
            register_cost: 32.0,
        }
    }
}

/// Entry entropies uniform in the regime band; other fields uniform in
/// `shape`'s ranges, with fixed costs.
pub fn synthetic_chain(n: usize, regime: Regime, shape: &ChainShape, seed: u64) -> Result<OperatorChain> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = regime.band();
    let ops = (0..n)
        .map(|_| OperatorDesc {
            entry_entropy: rng.random_range(lo..hi),
            arithmetic_intensity: rng.random_range(shape.ai_range.0..shape.ai_range.1),
            memory_traffic: rng.random_range(shape.traffic_range.0..shape.traffic_range.1),
            shared_mem_cost: shape.shared_mem_cost,
            register_cost: shape.register_cost,
        })
        .collect();
    OperatorChain::new(ops)
}

/// Budget fitting four default-shape operators per region.
pub fn default_budget() -> ResourceBudget {
    ResourceBudget::new(64.0, 255.0, 0.0, 16.0).expect("valid default budget")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub regime: Regime,
    pub policy: String,
    pub launches: usize,
    pub surrogate_ms: f64,
    /// Launch reduction against no-fusion, percent.
    pub reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub lengths: Vec<usize>,
    pub regimes: Vec<Regime>,
    pub weights: FusionWeights,
    pub budget: ResourceBudget,
    pub shape: ChainShape,
    pub per_call_ms: f64,
    pub static_group: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lengths: SWEEP_LENGTHS.to_vec(),
            regimes: Regime::ALL.to_vec(),
            weights: FusionWeights::default(),
            budget: default_budget(),
            shape: ChainShape::default(),
            per_call_ms: DEFAULT_PER_CALL_MS,
            static_group: 3,
            seed: 0,
        }
    }
}

/// Runs no-fusion, static groups, the greedy threshold solver and the DP on
/// one chain per `(n, regime)`. Chain seeds are `seed + index` in row order.
pub fn launch_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    let mut instance = 0u64;
    for &n in &cfg.lengths {
        for &regime in &cfg.regimes {
            let chain = synthetic_chain(n, regime, &cfg.shape, cfg.seed.wrapping_add(instance))?;
            instance += 1;
            let baseline = no_fusion(&chain, &cfg.weights, &cfg.budget)?;
            let plans: [(String, FusionPlan); 4] = [
                ("no-fusion".into(), baseline.clone()),
                (
                    format!("static-{}", cfg.static_group),
                    static_fusion(&chain, &cfg.weights, &cfg.budget, cfg.static_group)?,
                ),
                ("greedy".into(), solve_greedy_threshold(&chain, &cfg.weights, &cfg.budget)?),
                ("dp".into(), solve_dp(&chain, &cfg.weights, &cfg.budget)?),
            ];
            for (policy, plan) in plans {
                rows.push(SweepRow {
                    n,
                    regime,
                    policy,
                    launches: plan.launch_count,
                    surrogate_ms: surrogate_dispatch_latency(plan.launch_count, cfg.per_call_ms),
                    reduction_pct: 100.0 * (1.0 - plan.launch_count as f64 / baseline.launch_count as f64),
                });
            }
        }
    }
    Ok(rows)
}
