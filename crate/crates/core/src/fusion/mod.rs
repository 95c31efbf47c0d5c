//! Utility-driven fusion of operator chains into contiguous kernel regions.
//!
//! A region `R` over ops `i..j` scores
//!
//! ```text
//! U(R) = α·H(entry op) + β·Σ AI − γ·Σ M
//! ```
//!
//! and is feasible when its summed shared-memory and register costs fit the
//! budget and its occupancy stays above the floor. Spans are zero-based and
//! half-open throughout.

pub mod experiment;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorDesc {
    /// Entropy (nats) of the activation entering this operator.
    pub entry_entropy: f64,
    pub arithmetic_intensity: f64,
    pub memory_traffic: f64,
    pub shared_mem_cost: f64,
    pub register_cost: f64,
}

impl OperatorDesc {
    fn fields(&self) -> [(&'static str, f64); 5] {
        [
            ("entry_entropy", self.entry_entropy),
            ("arithmetic_intensity", self.arithmetic_intensity),
            ("memory_traffic", self.memory_traffic),
            ("shared_mem_cost", self.shared_mem_cost),
            ("register_cost", self.register_cost),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<OperatorDesc>", into = "Vec<OperatorDesc>")]
pub struct OperatorChain {
    ops: Vec<OperatorDesc>,
}

impl OperatorChain {
    pub fn new(ops: Vec<OperatorDesc>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::InvalidParameter("operator chain is empty".into()));
        }
        for (i, op) in ops.iter().enumerate() {
            for (name, v) in op.fields() {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "operator {i}: {name} = {v} must be finite and nonnegative"
                    )));
                }
            }
        }
        Ok(Self { ops })
    }

    pub fn ops(&self) -> &[OperatorDesc] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn span(&self, span: &Range<usize>) -> Result<&[OperatorDesc]> {
        if span.start >= span.end || span.end > self.ops.len() {
            return Err(Error::InvalidParameter(format!(
                "span {span:?} is not a non-empty range inside 0..{}",
                self.ops.len()
            )));
        }
        Ok(&self.ops[span.clone()])
    }
}

impl TryFrom<Vec<OperatorDesc>> for OperatorChain {
    type Error = Error;
    fn try_from(ops: Vec<OperatorDesc>) -> Result<Self> {
        Self::new(ops)
    }
}

impl From<OperatorChain> for Vec<OperatorDesc> {
    fn from(c: OperatorChain) -> Self {
        c.ops
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OccupancyModel {
    /// `min(1, M_shared / ΣC)`.
    SharedMemoryRatio,
    /// The same occupancy for every region.
    Fixed { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceBudget {
    pub m_shared: f64,
    pub r_max: f64,
    pub occ_min: f64,
    /// Homogeneous per-operator cost used by the depth bound.
    pub c_tile: f64,
    #[serde(default = "default_occupancy")]
    pub occupancy: OccupancyModel,
}

fn default_occupancy() -> OccupancyModel {
    OccupancyModel::SharedMemoryRatio
}

impl ResourceBudget {
    pub fn new(m_shared: f64, r_max: f64, occ_min: f64, c_tile: f64) -> Result<Self> {
        let b = Self {
            m_shared,
            r_max,
            occ_min,
            c_tile,
            occupancy: OccupancyModel::SharedMemoryRatio,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("m_shared", self.m_shared),
            ("r_max", self.r_max),
            ("c_tile", self.c_tile),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.occ_min) {
            return Err(Error::InvalidParameter(format!(
                "occ_min {} must lie in [0, 1]",
                self.occ_min
            )));
        }
        if let OccupancyModel::Fixed { value } = self.occupancy {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidParameter(format!("fixed occupancy {value} must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    /// Longest region of homogeneous `c_tile`-cost operators that fits.
    pub fn max_depth(&self) -> usize {
        (self.m_shared / self.c_tile).floor() as usize
    }

    pub fn occupancy(&self, shared_cost: f64) -> f64 {
        match self.occupancy {
            OccupancyModel::SharedMemoryRatio => (self.m_shared / shared_cost.max(f64::MIN_POSITIVE)).min(1.0),
            OccupancyModel::Fixed { value } => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Greedy threshold on the normalized score.
    pub tau: f64,
    /// Entropy normalizer for the greedy score, `ln K`.
    pub entropy_ceiling: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            alpha: 0.45,
            beta: 0.35,
            gamma: 0.20,
            tau: 0.52,
            entropy_ceiling: 64f64.ln(),
        }
    }
}

impl FusionWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        if self.tau.is_nan() {
            return Err(Error::InvalidParameter("tau is NaN".into()));
        }
        if !(self.entropy_ceiling > 0.0 && self.entropy_ceiling.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "entropy ceiling {} must be positive",
                self.entropy_ceiling
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionPlan {
    pub regions: Vec<Range<usize>>,
    pub total_utility: f64,
    pub launch_count: usize,
}

impl FusionPlan {
    fn from_regions(chain: &OperatorChain, regions: Vec<Range<usize>>, weights: &FusionWeights) -> Result<Self> {
        let mut total = 0.0;
        for r in &regions {
            total += region_utility(chain, r.clone(), weights)?;
        }
        Ok(Self {
            launch_count: regions.len(),
            regions,
            total_utility: total,
        })
    }

    /// Checks that the regions tile `0..n` in order and are all feasible.
    pub fn validate(&self, chain: &OperatorChain, budget: &ResourceBudget) -> Result<()> {
        let mut next = 0;
        for r in &self.regions {
            if r.start != next || r.end <= r.start {
                return Err(Error::InvalidParameter(format!("region {r:?} breaks the partition at {next}")));
            }
            if !feasible(chain, r.clone(), budget)? {
                return Err(Error::InvalidParameter(format!("region {r:?} is infeasible")));
            }
            next = r.end;
        }
        if next != chain.len() || self.launch_count != self.regions.len() {
            return Err(Error::InvalidParameter("regions do not cover the chain".into()));
        }
        Ok(())
    }

    pub fn max_region_len(&self) -> usize {
        self.regions.iter().map(|r| r.len()).max().unwrap_or(0)
    }
}

/// `α·H(first op) + β·Σ AI − γ·Σ M` over `span`.
pub fn region_utility(chain: &OperatorChain, span: Range<usize>, w: &FusionWeights) -> Result<f64> {
    let ops = chain.span(&span)?;
    let mut ai = 0.0;
    let mut m = 0.0;
    for op in ops {
        ai += op.arithmetic_intensity;
        m += op.memory_traffic;
    }
    Ok(w.alpha * ops[0].entry_entropy + w.beta * ai - w.gamma * m)
}

/// Shared memory, registers and occupancy all within budget (inclusive).
pub fn feasible(chain: &OperatorChain, span: Range<usize>, budget: &ResourceBudget) -> Result<bool> {
    let ops = chain.span(&span)?;
    let mut c = 0.0;
    let mut r = 0.0;
    for op in ops {
        c += op.shared_mem_cost;
        r += op.register_cost;
    }
    Ok(c <= budget.m_shared && r <= budget.r_max && budget.occupancy(c) >= budget.occ_min)
}

fn check_singletons(chain: &OperatorChain, budget: &ResourceBudget) -> Result<()> {
    budget.validate()?;
    for k in 0..chain.len() {
        if !feasible(chain, k..k + 1, budget)? {
            return Err(Error::Unfusable(k));
        }
    }
    Ok(())
}

/// Exact maximum-utility partition.
///
/// For each prefix end `i`, predecessors `j` are scanned upward from 0 and
/// only a strictly better value replaces the incumbent, so among equal-value
/// plans the one with the longest final region wins.
pub fn solve_dp(chain: &OperatorChain, weights: &FusionWeights, budget: &ResourceBudget) -> Result<FusionPlan> {
    weights.validate()?;
    check_singletons(chain, budget)?;
    let n = chain.len();
    let mut best = vec![f64::NEG_INFINITY; n + 1];
    let mut prev = vec![usize::MAX; n + 1];
    best[0] = 0.0;
    prev[0] = 0;
    for i in 1..=n {
        for j in 0..i {
            if !feasible(chain, j..i, budget)? {
                continue;
            }
            let v = best[j] + region_utility(chain, j..i, weights)?;
            if v > best[i] {
                best[i] = v;
                prev[i] = j;
            }
        }
    }

    let mut regions = Vec::new();
    let mut i = n;
    while i > 0 {
        let j = prev[i];
        regions.push(j..i);
        i = j;
    }
    regions.reverse();
    Ok(FusionPlan {
        launch_count: regions.len(),
        regions,
        total_utility: best[n],
    })
}

/// Left-to-right greedy: extend the open region while the extension stays
/// feasible and its normalized score is at least `τ`.
///
/// The normalized score of a candidate region is
/// `α·H/ceiling + β·mean(AI)/max(AI) − γ·mean(M)/max(M)`, with maxima taken
/// over the whole chain (a zero maximum drops its term).
pub fn solve_greedy_threshold(
    chain: &OperatorChain,
    weights: &FusionWeights,
    budget: &ResourceBudget,
) -> Result<FusionPlan> {
    weights.validate()?;
    check_singletons(chain, budget)?;
    let ops = chain.ops();
    let max_ai = ops.iter().map(|o| o.arithmetic_intensity).fold(0.0, f64::max);
    let max_m = ops.iter().map(|o| o.memory_traffic).fold(0.0, f64::max);
    let score = |span: &Range<usize>| {
        let region = &ops[span.clone()];
        let n = region.len() as f64;
        let ratio = |sum: f64, max: f64| if max > 0.0 { sum / n / max } else { 0.0 };
        let ai = ratio(region.iter().map(|o| o.arithmetic_intensity).sum(), max_ai);
        let m = ratio(region.iter().map(|o| o.memory_traffic).sum(), max_m);
        weights.alpha * region[0].entry_entropy / weights.entropy_ceiling + weights.beta * ai - weights.gamma * m
    };

    let mut regions = Vec::new();
    let mut start = 0;
    for j in 1..chain.len() {
        let candidate = start..j + 1;
        if !(feasible(chain, candidate.clone(), budget)? && score(&candidate) >= weights.tau) {
            regions.push(start..j);
            start = j;
        }
    }
    regions.push(start..chain.len());
    FusionPlan::from_regions(chain, regions, weights)
}

/// Fixed-size groups, closing a group early when the next op would not fit.
pub fn static_fusion(
    chain: &OperatorChain,
    weights: &FusionWeights,
    budget: &ResourceBudget,
    group: usize,
) -> Result<FusionPlan> {
    if group == 0 {
        return Err(Error::InvalidParameter("group size must be at least 1".into()));
    }
    check_singletons(chain, budget)?;
    let mut regions = Vec::new();
    let mut start = 0;
    for j in 1..chain.len() {
        if j - start >= group || !feasible(chain, start..j + 1, budget)? {
            regions.push(start..j);
            start = j;
        }
    }
    regions.push(start..chain.len());
    FusionPlan::from_regions(chain, regions, weights)
}

/// One region per operator.
pub fn no_fusion(chain: &OperatorChain, weights: &FusionWeights, budget: &ResourceBudget) -> Result<FusionPlan> {
    check_singletons(chain, budget)?;
    FusionPlan::from_regions(chain, (0..chain.len()).map(|k| k..k + 1).collect(), weights)
}

/// Best plan over all `2^(n-1)` contiguous partitions. Intended as a test
/// oracle for short chains.
pub fn exhaustive(chain: &OperatorChain, weights: &FusionWeights, budget: &ResourceBudget) -> Result<Option<FusionPlan>> {
    let n = chain.len();
    if n > 24 {
        return Err(Error::InvalidParameter(format!("chain of {n} ops is too long to enumerate")));
    }
    let mut best: Option<FusionPlan> = None;
    for mask in 0u32..(1 << (n - 1)) {
        // Bit k set means a cut between op k and op k+1.
        let mut regions = Vec::new();
        let mut start = 0;
        for k in 0..n - 1 {
            if mask & (1 << k) != 0 {
                regions.push(start..k + 1);
                start = k + 1;
            }
        }
        regions.push(start..n);
        let mut ok = true;
        for r in &regions {
            if !feasible(chain, r.clone(), budget)? {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let plan = FusionPlan::from_regions(chain, regions, weights)?;
        if best.as_ref().is_none_or(|b| plan.total_utility > b.total_utility) {
            best = Some(plan);
        }
    }
    Ok(best)
}

/// Launch count times per-launch cost.
pub fn surrogate_dispatch_latency(launch_count: usize, per_call_ms: f64) -> f64 {
    launch_count as f64 * per_call_ms
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(h: f64, ai: f64, m: f64, c: f64) -> OperatorDesc {
        OperatorDesc {
            entry_entropy: h,
            arithmetic_intensity: ai,
            memory_traffic: m,
            shared_mem_cost: c,
            register_cost: 1.0,
        }
    }

    fn budget(m_shared: f64, c_tile: f64) -> ResourceBudget {
        ResourceBudget::new(m_shared, 1e9, 0.0, c_tile).unwrap()
    }

    #[test]
    fn single_op_utility() {
        let chain = OperatorChain::new(vec![op(1.0, 1.0, 1.0, 1.0)]).unwrap();
        let u = region_utility(&chain, 0..1, &FusionWeights::default()).unwrap();
        assert!((u - 0.60).abs() < 1e-12);
        let plan = solve_dp(&chain, &FusionWeights::default(), &budget(10.0, 1.0)).unwrap();
        assert_eq!(plan.regions, vec![0..1]);
        assert_eq!(plan.total_utility, u);
    }

    #[test]
    fn utility_grows_with_length_without_traffic_penalty() {
        let chain = OperatorChain::new(vec![op(2.0, 1.5, 3.0, 1.0); 6]).unwrap();
        let w = FusionWeights {
            gamma: 0.0,
            ..Default::default()
        };
        let us: Vec<f64> = (1..=6).map(|j| region_utility(&chain, 0..j, &w).unwrap()).collect();
        assert!(us.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn invalid_spans() {
        let chain = OperatorChain::new(vec![op(1.0, 1.0, 1.0, 1.0); 3]).unwrap();
        assert!(region_utility(&chain, 2..2, &FusionWeights::default()).is_err());
        assert!(region_utility(&chain, 1..4, &FusionWeights::default()).is_err());
        assert!(OperatorChain::new(vec![]).is_err());
        assert!(OperatorChain::new(vec![op(-1.0, 1.0, 1.0, 1.0)]).is_err());
    }

    #[test]
    fn depth_bound_example() {
        let chain = OperatorChain::new(vec![op(1.0, 1.0, 1.0, 16.0); 5]).unwrap();
        let b = budget(48.0, 16.0);
        assert_eq!(b.max_depth(), 3);
        assert!(feasible(&chain, 0..3, &b).unwrap());
        assert!(!feasible(&chain, 0..4, &b).unwrap());
        let free = OperatorChain::new(vec![op(1.0, 1.0, 1.0, 0.0)]).unwrap();
        assert!(feasible(&free, 0..1, &b).unwrap());
    }

    #[test]
    fn occupancy_predicate() {
        let chain = OperatorChain::new(vec![op(1.0, 1.0, 1.0, 10.0); 2]).unwrap();
        let mut b = ResourceBudget::new(20.0, 10.0, 1.0, 10.0).unwrap();
        assert!(feasible(&chain, 0..2, &b).unwrap());
        b.occupancy = OccupancyModel::Fixed { value: 0.5 };
        assert!(!feasible(&chain, 0..1, &b).unwrap());
        b.occ_min = 0.5;
        assert!(feasible(&chain, 0..2, &b).unwrap());
    }

    #[test]
    fn unfusable_singleton() {
        let chain = OperatorChain::new(vec![op(1.0, 1.0, 1.0, 1.0), op(1.0, 1.0, 1.0, 99.0)]).unwrap();
        let b = budget(10.0, 1.0);
        assert_eq!(solve_dp(&chain, &FusionWeights::default(), &b), Err(Error::Unfusable(1)));
        assert_eq!(
            solve_greedy_threshold(&chain, &FusionWeights::default(), &b),
            Err(Error::Unfusable(1))
        );
    }

    #[test]
    fn zero_entropy_identical_ops_fuse_into_one_region() {
        let chain = OperatorChain::new(vec![op(0.0, 1.0, 1.0, 1.0); 4]).unwrap();
        let w = FusionWeights {
            gamma: 0.0,
            ..Default::default()
        };
        let plan = solve_dp(&chain, &w, &budget(100.0, 1.0)).unwrap();
        assert_eq!(plan.launch_count, 1);
        assert_eq!(plan.regions, vec![0..4]);
    }

    #[test]
    fn greedy_threshold_limits() {
        let chain = OperatorChain::new(vec![op(2.0, 1.0, 1.0, 1.0); 5]).unwrap();
        let b = budget(100.0, 1.0);
        let low = FusionWeights {
            tau: -1e300,
            ..Default::default()
        };
        assert_eq!(solve_greedy_threshold(&chain, &low, &b).unwrap().regions, vec![0..5]);
        let high = FusionWeights {
            tau: 1e300,
            ..Default::default()
        };
        assert_eq!(solve_greedy_threshold(&chain, &high, &b).unwrap().launch_count, 5);
    }

    #[test]
    fn static_groups_of_three() {
        let b = budget(1e6, 1.0);
        for (n, want) in [(4, 2), (8, 3), (16, 6), (32, 11), (64, 22)] {
            let chain = OperatorChain::new(vec![op(1.0, 1.0, 1.0, 1.0); n]).unwrap();
            let plan = static_fusion(&chain, &FusionWeights::default(), &b, 3).unwrap();
            assert_eq!(plan.launch_count, want, "n = {n}");
            plan.validate(&chain, &b).unwrap();
        }
        // A tight budget closes groups early.
        let chain = OperatorChain::new(vec![op(1.0, 1.0, 1.0, 1.0); 4]).unwrap();
        let plan = static_fusion(&chain, &FusionWeights::default(), &budget(2.0, 1.0), 3).unwrap();
        assert_eq!(plan.regions, vec![0..2, 2..4]);
    }

    #[test]
    fn dp_matches_exhaustive_on_a_mixed_chain() {
        let chain = OperatorChain::new(vec![
            op(0.5, 3.0, 0.2, 4.0),
            op(3.0, 0.1, 2.0, 4.0),
            op(0.1, 2.0, 0.1, 8.0),
            op(2.0, 2.0, 0.5, 4.0),
            op(0.0, 4.0, 0.1, 2.0),
        ])
        .unwrap();
        let b = budget(12.0, 4.0);
        let w = FusionWeights::default();
        let dp = solve_dp(&chain, &w, &b).unwrap();
        let brute = exhaustive(&chain, &w, &b).unwrap().unwrap();
        assert_eq!(dp.total_utility, brute.total_utility);
        dp.validate(&chain, &b).unwrap();
    }

    #[test]
    fn surrogate_latency() {
        assert!((surrogate_dispatch_latency(64, 0.05155) - 3.299).abs() < 0.001);
        assert!((surrogate_dispatch_latency(4, 0.05155) - 0.206).abs() < 0.001);
        assert_eq!(surrogate_dispatch_latency(7, 0.0), 0.0);
    }

    #[test]
    fn chain_json_validates() {
        assert!(serde_json::from_str::<OperatorChain>("[]").is_err());
        let chain = OperatorChain::new(vec![op(1.0, 2.0, 3.0, 4.0)]).unwrap();
        let s = serde_json::to_string(&chain).unwrap();
        assert_eq!(serde_json::from_str::<OperatorChain>(&s).unwrap(), chain);
    }
}
