//! Per-regime static sweeps: global averages, the per-regime oracle and the
//! sequence-length rule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fixtures::RegimeRow;
use crate::error::{Error, Result};
use crate::policy::LearnedTableRule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub mean_ms: f64,
    pub std_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRecord {
    pub regime: String,
    pub approx_tokens: usize,
    pub latencies: BTreeMap<usize, Measurement>,
}

impl RegimeRecord {
    /// Groups long-form rows by regime, keeping first-appearance order.
    pub fn from_rows(rows: &[RegimeRow]) -> Result<Vec<Self>> {
        let mut out: Vec<RegimeRecord> = Vec::new();
        for r in rows {
            let idx = match out.iter().position(|x| x.regime == r.regime) {
                Some(i) => i,
                None => {
                    out.push(RegimeRecord {
                        regime: r.regime.clone(),
                        approx_tokens: r.approx_tokens,
                        latencies: BTreeMap::new(),
                    });
                    out.len() - 1
                }
            };
            let rec = &mut out[idx];
            if rec.approx_tokens != r.approx_tokens {
                return Err(Error::InvalidParameter(format!(
                    "regime {} has conflicting token counts",
                    r.regime
                )));
            }
            let m = Measurement {
                mean_ms: r.mean_ms,
                std_ms: r.std_ms,
            };
            if rec.latencies.insert(r.chunk, m).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "regime {} lists chunk {} twice",
                    r.regime, r.chunk
                )));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedRegimeReport {
    pub chunks: Vec<usize>,
    /// Equal-weight mean latency of each global static chunk.
    pub static_avg_ms: BTreeMap<usize, f64>,
    pub best_static_chunk: usize,
    pub best_static_ms: f64,
    /// Chunk with the lowest mean in each regime.
    pub oracle_choices: Vec<(String, usize)>,
    pub oracle_ms: f64,
    pub rule_choices: Vec<(String, usize)>,
    pub rule_ms: f64,
    /// `(oracle − best static) / best static`, percent.
    pub oracle_delta_pct: f64,
    pub rule_delta_pct: f64,
}

/// Equal-weight analysis over all regimes.
///
/// Every record must measure the same chunk set, and that set must include
/// both chunks of the rule. Per-regime minima replace the incumbent only on a
/// strictly lower mean, so exact ties keep the smaller chunk.
pub fn analyze_mixed_regime(records: &[RegimeRecord], rule: &LearnedTableRule) -> Result<MixedRegimeReport> {
    let first = records.first().ok_or(Error::NoSamples)?;
    let chunks: Vec<usize> = first.latencies.keys().copied().collect();
    for r in records {
        let have: Vec<usize> = r.latencies.keys().copied().collect();
        if have != chunks {
            return Err(Error::InvalidParameter(format!(
                "regime {} measures chunks {have:?}, expected {chunks:?}",
                r.regime
            )));
        }
    }
    for c in [rule.short_chunk, rule.long_chunk] {
        if !chunks.contains(&c) {
            return Err(Error::InvalidParameter(format!("rule chunk {c} has no measurement column")));
        }
    }

    let n = records.len() as f64;
    let static_avg_ms: BTreeMap<usize, f64> = chunks
        .iter()
        .map(|&c| (c, records.iter().map(|r| r.latencies[&c].mean_ms).sum::<f64>() / n))
        .collect();
    let (mut best_static_chunk, mut best_static_ms) = (chunks[0], static_avg_ms[&chunks[0]]);
    for (&c, &v) in &static_avg_ms {
        if v < best_static_ms {
            best_static_chunk = c;
            best_static_ms = v;
        }
    }

    let mut oracle_choices = Vec::new();
    let mut oracle_sum = 0.0;
    for r in records {
        let (mut bc, mut bv) = (chunks[0], r.latencies[&chunks[0]].mean_ms);
        for (&c, m) in &r.latencies {
            if m.mean_ms < bv {
                bc = c;
                bv = m.mean_ms;
            }
        }
        oracle_choices.push((r.regime.clone(), bc));
        oracle_sum += bv;
    }
    let oracle_ms = oracle_sum / n;

    let mut rule_choices = Vec::new();
    let mut rule_sum = 0.0;
    for r in records {
        let c = rule.chunk_for(r.approx_tokens);
        rule_choices.push((r.regime.clone(), c));
        rule_sum += r.latencies[&c].mean_ms;
    }
    let rule_ms = rule_sum / n;

    Ok(MixedRegimeReport {
        chunks,
        static_avg_ms,
        best_static_chunk,
        best_static_ms,
        oracle_choices,
        oracle_ms,
        rule_choices,
        rule_ms,
        oracle_delta_pct: 100.0 * (oracle_ms - best_static_ms) / best_static_ms,
        rule_delta_pct: 100.0 * (rule_ms - best_static_ms) / best_static_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(name: &str, tokens: usize, ms: [f64; 3]) -> RegimeRecord {
        RegimeRecord {
            regime: name.into(),
            approx_tokens: tokens,
            latencies: [128, 256, 512]
                .into_iter()
                .zip(ms)
                .map(|(c, m)| (c, Measurement { mean_ms: m, std_ms: 0.0 }))
                .collect(),
        }
    }

    #[test]
    fn identical_regimes_make_the_oracle_trivial() {
        let rs = vec![rec("a", 100, [3.0, 2.0, 1.0]), rec("b", 100, [3.0, 2.0, 1.0])];
        let r = analyze_mixed_regime(&rs, &LearnedTableRule::default()).unwrap();
        assert_eq!(r.oracle_ms, r.best_static_ms);
        assert_eq!(r.best_static_chunk, 512);
        assert_eq!(r.oracle_delta_pct, 0.0);
    }

    #[test]
    fn rule_routes_short_prompts() {
        let rs = vec![rec("short", 10, [1.0, 2.0, 3.0]), rec("long", 900, [9.0, 8.0, 7.0])];
        let r = analyze_mixed_regime(&rs, &LearnedTableRule::default()).unwrap();
        assert_eq!(r.rule_ms, 4.0);
        assert_eq!(r.oracle_ms, 4.0);
        assert_eq!(r.rule_choices[0].1, 128);
        assert!(r.oracle_ms <= r.static_avg_ms.values().cloned().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn ties_keep_the_smaller_chunk() {
        let rs = vec![rec("t", 100, [5.0, 4.0, 4.0])];
        let r = analyze_mixed_regime(&rs, &LearnedTableRule::default()).unwrap();
        assert_eq!(r.oracle_choices[0].1, 256);
    }

    #[test]
    fn missing_columns_are_errors() {
        let mut broken = rec("x", 10, [1.0, 1.0, 1.0]);
        broken.latencies.remove(&128);
        assert!(analyze_mixed_regime(&[broken.clone()], &LearnedTableRule::default()).is_err());
        assert!(analyze_mixed_regime(&[rec("a", 1, [1.0; 3]), broken], &LearnedTableRule::default()).is_err());
        assert!(analyze_mixed_regime(&[], &LearnedTableRule::default()).is_err());
    }
}
