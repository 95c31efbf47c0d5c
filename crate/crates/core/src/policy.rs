//! Entropy-to-chunk mapping and the scheduler family.
//!
//! The core rule maps a signal `s` (nats) to a power-of-two chunk:
//!
//! ```text
//! r     = min(s / h_ref, 1)
//! chunk = clip(2^round(log2(c_min + r·(c_max − c_min))), c_min, c_max)
//! ```
//!
//! [`Scheduler`] wraps that rule in the variants used by the routed ablation:
//! static chunks, a midpoint baseline, a seeded random draw, three histogram
//! flavours, moment proxies, a guarded wrapper and a sequence-length table.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entropy::{self, ActivationTensor, HistogramSpec, Moments};
use crate::error::{Error, Result};

/// Legacy fixed entropy reference.
pub const LEGACY_H_REF: f64 = 8.0;

/// Buckets of the routed ablation.
pub const ROUTED_BUCKETS: [usize; 5] = [128, 256, 512, 1024, 2048];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawBounds")]
pub struct ChunkBounds {
    c_min: usize,
    c_max: usize,
}

#[derive(Deserialize)]
struct RawBounds {
    c_min: usize,
    c_max: usize,
}

impl TryFrom<RawBounds> for ChunkBounds {
    type Error = Error;
    fn try_from(raw: RawBounds) -> Result<Self> {
        ChunkBounds::new(raw.c_min, raw.c_max)
    }
}

impl ChunkBounds {
    pub fn new(c_min: usize, c_max: usize) -> Result<Self> {
        if !c_min.is_power_of_two() || !c_max.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "chunk bounds ({c_min}, {c_max}) must be powers of two"
            )));
        }
        if c_min > c_max {
            return Err(Error::InvalidParameter(format!(
                "c_min {c_min} exceeds c_max {c_max}"
            )));
        }
        Ok(Self { c_min, c_max })
    }

    /// Tile-size variant, `{64, …, 512}`.
    pub fn tile() -> Self {
        Self { c_min: 64, c_max: 512 }
    }

    pub fn c_min(&self) -> usize {
        self.c_min
    }

    pub fn c_max(&self) -> usize {
        self.c_max
    }
}

impl Default for ChunkBounds {
    fn default() -> Self {
        Self { c_min: 32, c_max: 512 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// `h_ref = ln K`.
    LogK,
    /// `h_ref = 8.0`.
    LegacyFixed,
    /// Any other positive reference.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRef {
    pub mode: CalibrationMode,
    pub h_ref_nats: f64,
}

impl CalibrationRef {
    /// Calibrated reference: the entropy ceiling of a `bins`-bin histogram.
    pub fn log_k(bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::DegenerateSpec(format!(
                "bin count {bins} must be at least 2"
            )));
        }
        Ok(Self {
            mode: CalibrationMode::LogK,
            h_ref_nats: (bins as f64).ln(),
        })
    }

    pub fn legacy() -> Self {
        Self {
            mode: CalibrationMode::LegacyFixed,
            h_ref_nats: LEGACY_H_REF,
        }
    }

    pub fn fixed(h_ref_nats: f64) -> Result<Self> {
        let cal = Self {
            mode: CalibrationMode::Custom,
            h_ref_nats,
        };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<()> {
        if self.h_ref_nats > 0.0 && self.h_ref_nats.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "h_ref {} must be positive",
                self.h_ref_nats
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkDecision {
    pub chunk: usize,
    /// Normalized signal; absent for policies that never look at one.
    pub r: Option<f64>,
    pub signal_nats: Option<f64>,
    pub h_ref_nats: Option<f64>,
    pub source_policy: String,
}

/// The bare rule, tagged `"rule"`.
pub fn select_chunk(signal_nats: f64, bounds: ChunkBounds, cal: CalibrationRef) -> Result<ChunkDecision> {
    if !(signal_nats >= 0.0 && signal_nats.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "signal {signal_nats} must be finite and nonnegative"
        )));
    }
    cal.validate()?;
    let r = (signal_nats / cal.h_ref_nats).min(1.0);
    let (lo, hi) = (bounds.c_min as f64, bounds.c_max as f64);
    // f64::round sends exact halves away from zero, i.e. up for log2 ≥ 0.
    let exponent = (lo + r * (hi - lo)).log2().round();
    let chunk = (2f64.powf(exponent) as usize).clamp(bounds.c_min, bounds.c_max);
    Ok(ChunkDecision {
        chunk,
        r: Some(r),
        signal_nats: Some(signal_nats),
        h_ref_nats: Some(cal.h_ref_nats),
        source_policy: "rule".into(),
    })
}

/// Number of kernel invocations to cover `seq_len` tokens.
///
/// # Panics
/// If `chunk` is zero.
pub fn kernel_calls(seq_len: usize, chunk: usize) -> usize {
    assert!(chunk > 0, "chunk must be positive");
    seq_len.div_ceil(chunk)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    /// Mean absolute activation.
    Cheap,
    Variance,
    Kurtosis,
}

/// Reference scales that turn a moment into an `r`-like ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRefs {
    pub mean_abs_ref: f64,
    pub variance_ref: f64,
    pub kurtosis_ref: f64,
}

impl Default for MomentRefs {
    fn default() -> Self {
        Self {
            mean_abs_ref: 1.0,
            variance_ref: 1.0,
            kurtosis_ref: 3.0,
        }
    }
}

impl MomentRefs {
    fn reference(&self, kind: MomentKind) -> f64 {
        match kind {
            MomentKind::Cheap => self.mean_abs_ref,
            MomentKind::Variance => self.variance_ref,
            MomentKind::Kurtosis => self.kurtosis_ref,
        }
    }
}

/// Short prompts get `short_chunk`, everything else `long_chunk`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnedTableRule {
    pub threshold_tokens: usize,
    pub short_chunk: usize,
    pub long_chunk: usize,
}

impl LearnedTableRule {
    /// `short_chunk` iff `seq_len < threshold_tokens`.
    pub fn chunk_for(&self, seq_len: usize) -> usize {
        if seq_len < self.threshold_tokens {
            self.short_chunk
        } else {
            self.long_chunk
        }
    }
}

impl Default for LearnedTableRule {
    fn default() -> Self {
        Self {
            threshold_tokens: 50,
            short_chunk: 128,
            long_chunk: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyVariant {
    Static {
        chunk: usize,
    },
    NoEntropyMidpoint,
    Random {
        seed: u64,
    },
    FullHistogram,
    SampledHistogram {
        stride: usize,
    },
    TokenHistogram {
        stride: usize,
    },
    MomentProxy {
        proxy: MomentKind,
        #[serde(default)]
        refs: MomentRefs,
    },
    Guarded {
        inner: Box<PolicyVariant>,
        safe_chunk: usize,
        min_delta_buckets: u32,
    },
    LearnedTable(LearnedTableRule),
}

impl PolicyVariant {
    /// Short label used in traces and reports.
    pub fn tag(&self) -> String {
        match self {
            PolicyVariant::Static { chunk } => format!("static-{chunk}"),
            PolicyVariant::NoEntropyMidpoint => "no-entropy".into(),
            PolicyVariant::Random { .. } => "random".into(),
            PolicyVariant::FullHistogram => "full-histogram".into(),
            PolicyVariant::SampledHistogram { .. } => "sampled-histogram".into(),
            PolicyVariant::TokenHistogram { .. } => "token-histogram".into(),
            PolicyVariant::MomentProxy { proxy, .. } => match proxy {
                MomentKind::Cheap => "cheap-moment".into(),
                MomentKind::Variance => "variance".into(),
                MomentKind::Kurtosis => "kurtosis".into(),
            },
            PolicyVariant::Guarded { inner, .. } => format!("guarded({})", inner.tag()),
            PolicyVariant::LearnedTable(_) => "learned-table".into(),
        }
    }

    fn fixed_chunks(&self, out: &mut Vec<usize>) {
        match self {
            PolicyVariant::Static { chunk } => out.push(*chunk),
            PolicyVariant::Guarded {
                inner, safe_chunk, ..
            } => {
                out.push(*safe_chunk);
                inner.fixed_chunks(out);
            }
            PolicyVariant::LearnedTable(rule) => {
                out.push(rule.short_chunk);
                out.push(rule.long_chunk);
            }
            _ => {}
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PolicyVariant::SampledHistogram { stride } | PolicyVariant::TokenHistogram { stride }
                if *stride == 0 =>
            {
                Err(Error::InvalidParameter("histogram stride must be at least 1".into()))
            }
            PolicyVariant::MomentProxy { refs, .. } => {
                for (name, v) in [
                    ("mean_abs_ref", refs.mean_abs_ref),
                    ("variance_ref", refs.variance_ref),
                    ("kurtosis_ref", refs.kurtosis_ref),
                ] {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(Error::InvalidParameter(format!("{name} {v} must be positive")));
                    }
                }
                Ok(())
            }
            PolicyVariant::Guarded { inner, .. } => inner.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerPolicy {
    pub variant: PolicyVariant,
    pub bucket_set: Vec<usize>,
}

impl SchedulerPolicy {
    pub fn new(variant: PolicyVariant, bucket_set: Vec<usize>) -> Result<Self> {
        let policy = Self { variant, bucket_set };
        policy.validate()?;
        Ok(policy)
    }

    /// Same variant over [`ROUTED_BUCKETS`].
    pub fn routed(variant: PolicyVariant) -> Result<Self> {
        Self::new(variant, ROUTED_BUCKETS.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bucket_set;
        if b.is_empty() {
            return Err(Error::InvalidParameter("bucket set is empty".into()));
        }
        if b.iter().any(|c| !c.is_power_of_two()) || b.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "bucket set {b:?} must be strictly increasing powers of two"
            )));
        }
        let mut fixed = Vec::new();
        self.variant.fixed_chunks(&mut fixed);
        if let Some(c) = fixed.iter().find(|c| !b.contains(c)) {
            return Err(Error::InvalidParameter(format!(
                "chunk {c} is not in bucket set {b:?}"
            )));
        }
        self.variant.validate()
    }

    /// Element at index `⌈n/2⌉` (clamped), so five buckets give the fourth.
    pub fn midpoint(&self) -> usize {
        let n = self.bucket_set.len();
        self.bucket_set[n.div_ceil(2).min(n - 1)]
    }

    /// Nearest bucket in log2 distance; ties go to the larger bucket.
    pub fn snap(&self, chunk: usize) -> usize {
        let target = (chunk as f64).log2();
        let mut best = self.bucket_set[0];
        let mut best_d = f64::INFINITY;
        for &b in &self.bucket_set {
            let d = ((b as f64).log2() - target).abs();
            if d <= best_d {
                best = b;
                best_d = d;
            }
        }
        best
    }
}

/// Inputs a scheduler may consult. Fields a variant does not need may be
/// left empty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SchedulerFeatures {
    pub full_entropy: Option<f64>,
    pub sampled_entropy: Option<f64>,
    pub token_entropy: Option<f64>,
    pub moments: Option<Moments>,
    pub seq_len: Option<usize>,
    pub layer_index: Option<usize>,
}

impl SchedulerFeatures {
    /// Computes exactly the features `variant` reads from `tensor`.
    pub fn extract(variant: &PolicyVariant, tensor: &ActivationTensor, spec: &HistogramSpec) -> Result<Self> {
        let mut f = Self {
            seq_len: Some(tensor.seq_len()),
            ..Self::default()
        };
        f.fill(variant, tensor, spec)?;
        Ok(f)
    }

    fn fill(&mut self, variant: &PolicyVariant, tensor: &ActivationTensor, spec: &HistogramSpec) -> Result<()> {
        match variant {
            PolicyVariant::FullHistogram => {
                let s = HistogramSpec { stride: 1, ..*spec };
                self.full_entropy = Some(entropy::entropy_of(tensor, &s)?.raw_nats);
            }
            PolicyVariant::SampledHistogram { stride } => {
                let s = spec.with_stride(*stride)?;
                self.sampled_entropy = Some(entropy::entropy_of(tensor, &s)?.raw_nats);
            }
            PolicyVariant::TokenHistogram { stride } => {
                self.token_entropy = Some(entropy::token_entropy(tensor, spec, *stride)?.raw_nats);
            }
            PolicyVariant::MomentProxy { .. } => {
                self.moments = Some(Moments::of(tensor.values())?);
            }
            PolicyVariant::Guarded { inner, .. } => self.fill(inner, tensor, spec)?,
            _ => {}
        }
        Ok(())
    }
}

/// A policy bound to its rule parameters and random stream.
#[derive(Debug, Clone)]
pub struct Scheduler {
    policy: SchedulerPolicy,
    bounds: ChunkBounds,
    cal: CalibrationRef,
    rng: ChaCha8Rng,
}

impl Scheduler {
    pub fn new(policy: SchedulerPolicy, bounds: ChunkBounds, cal: CalibrationRef) -> Result<Self> {
        policy.validate()?;
        cal.validate()?;
        let seed = random_seed(&policy.variant).unwrap_or(0);
        Ok(Self {
            policy,
            bounds,
            cal,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn policy(&self) -> &SchedulerPolicy {
        &self.policy
    }

    pub fn decide(&mut self, features: &SchedulerFeatures) -> Result<ChunkDecision> {
        let variant = self.policy.variant.clone();
        let mut d = self.decide_variant(&variant, features)?;
        d.source_policy = variant.tag();
        Ok(d)
    }

    fn decide_variant(&mut self, variant: &PolicyVariant, f: &SchedulerFeatures) -> Result<ChunkDecision> {
        let fixed = |chunk: usize| ChunkDecision {
            chunk,
            r: None,
            signal_nats: None,
            h_ref_nats: None,
            source_policy: String::new(),
        };
        match variant {
            PolicyVariant::Static { chunk } => Ok(fixed(*chunk)),
            PolicyVariant::NoEntropyMidpoint => Ok(fixed(self.policy.midpoint())),
            PolicyVariant::Random { .. } => {
                let i = self.rng.random_range(0..self.policy.bucket_set.len());
                Ok(fixed(self.policy.bucket_set[i]))
            }
            PolicyVariant::FullHistogram => {
                self.rule(require(f.full_entropy, "full_entropy")?, self.cal)
            }
            PolicyVariant::SampledHistogram { .. } => {
                self.rule(require(f.sampled_entropy, "sampled_entropy")?, self.cal)
            }
            PolicyVariant::TokenHistogram { .. } => {
                self.rule(require(f.token_entropy, "token_entropy")?, self.cal)
            }
            PolicyVariant::MomentProxy { proxy, refs } => {
                let m = require(f.moments, "moments")?;
                let stat = match proxy {
                    MomentKind::Cheap => m.mean_abs,
                    MomentKind::Variance => m.variance,
                    MomentKind::Kurtosis => m.kurtosis,
                };
                self.rule(stat, CalibrationRef::fixed(refs.reference(*proxy))?)
            }
            PolicyVariant::Guarded {
                inner,
                safe_chunk,
                min_delta_buckets,
            } => {
                let mut d = self.decide_variant(inner, f)?;
                let delta = ((d.chunk as f64).log2() - (*safe_chunk as f64).log2()).abs();
                if delta < *min_delta_buckets as f64 {
                    d.chunk = *safe_chunk;
                }
                Ok(d)
            }
            PolicyVariant::LearnedTable(rule) => {
                let seq_len = require(f.seq_len, "seq_len")?;
                Ok(fixed(rule.chunk_for(seq_len)))
            }
        }
    }

    fn rule(&self, signal: f64, cal: CalibrationRef) -> Result<ChunkDecision> {
        let mut d = select_chunk(signal, self.bounds, cal)?;
        d.chunk = self.policy.snap(d.chunk);
        Ok(d)
    }
}

fn random_seed(variant: &PolicyVariant) -> Option<u64> {
    match variant {
        PolicyVariant::Random { seed } => Some(*seed),
        PolicyVariant::Guarded { inner, .. } => random_seed(inner),
        _ => None,
    }
}

fn require<T>(v: Option<T>, name: &'static str) -> Result<T> {
    v.ok_or(Error::MissingFeature(name))
}

/// One-shot decision with a freshly seeded scheduler.
pub fn schedule(
    policy: &SchedulerPolicy,
    features: &SchedulerFeatures,
    bounds: ChunkBounds,
    cal: CalibrationRef,
) -> Result<ChunkDecision> {
    Scheduler::new(policy.clone(), bounds, cal)?.decide(features)
}

/// `τ_t = τ0 + ρ·(h − h_min)/(h_max − h_min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveThreshold {
    pub tau0: f64,
    pub rho: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl AdaptiveThreshold {
    pub fn new(tau0: f64, rho: f64, h_min: f64, h_max: f64) -> Result<Self> {
        if h_min.is_nan() || h_max.is_nan() || h_min >= h_max {
            return Err(Error::InvalidParameter(format!(
                "h_min {h_min} must be below h_max {h_max}"
            )));
        }
        Ok(Self { tau0, rho, h_min, h_max })
    }

    /// Range `[0, ln K]`.
    pub fn for_bins(tau0: f64, rho: f64, bins: usize) -> Result<Self> {
        Self::new(tau0, rho, 0.0, (bins as f64).ln())
    }

    pub fn tau(&self, h: f64) -> f64 {
        self.tau0 + self.rho * (h - self.h_min) / (self.h_max - self.h_min)
    }
}

/// Chunk-count histogram, printed as `{1024:2173,2048:371}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkDistribution(pub BTreeMap<usize, u64>);

impl ChunkDistribution {
    pub fn record(&mut self, chunk: usize) {
        *self.0.entry(chunk).or_insert(0) += 1;
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }
}

impl FromIterator<usize> for ChunkDistribution {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut d = Self::default();
        for c in iter {
            d.record(c);
        }
        d
    }
}

impl fmt::Display for ChunkDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (chunk, count)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{chunk}:{count}")?;
        }
        f.write_str("}")
    }
}

impl FromStr for ChunkDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("malformed chunk distribution {s:?}"));
        let inner = s
            .trim()
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(bad)?;
        let mut map = BTreeMap::new();
        for entry in inner.split(',').map(str::trim).filter(|e| !e.is_empty()) {
            let (k, v) = entry.split_once(':').ok_or_else(bad)?;
            let k = k.trim().parse().map_err(|_| bad())?;
            let v = v.trim().parse().map_err(|_| bad())?;
            map.insert(k, v);
        }
        Ok(Self(map))
    }
}

/// One scheduling decision as written to a JSONL trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub policy: String,
    pub chunk: usize,
    pub r: Option<f64>,
    pub signal: Option<f64>,
    pub seq_len: Option<usize>,
    pub layer: Option<usize>,
}

impl TraceRecord {
    pub fn new(d: &ChunkDecision, f: &SchedulerFeatures) -> Self {
        Self {
            policy: d.source_policy.clone(),
            chunk: d.chunk,
            r: d.r,
            signal: d.signal_nats,
            seq_len: f.seq_len,
            layer: f.layer_index,
        }
    }
}
