//! Routed scheduler ablation rows and slowdown ratios.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::policy::ChunkDistribution;

/// Invocations per configuration in the embedded ablation.
pub const ABLATION_INVOCATIONS: u64 = 2544;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: String,
    pub scheduler: String,
    pub latency_ms: f64,
    pub std_ms: f64,
    pub reported_slowdown: f64,
    /// `None` when only described qualitatively (written `uniform`).
    #[serde(deserialize_with = "de_distribution", serialize_with = "ser_distribution")]
    pub distribution: Option<ChunkDistribution>,
    #[serde(default)]
    pub note: String,
}

impl AblationRow {
    pub fn is_static(&self) -> bool {
        self.scheduler == "constant"
    }
}

fn de_distribution<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<ChunkDistribution>, D::Error> {
    let s = String::deserialize(d)?;
    if s.trim() == "uniform" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(serde::de::Error::custom)
}

fn ser_distribution<S: Serializer>(v: &Option<ChunkDistribution>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(d) => s.serialize_str(&d.to_string()),
        None => s.serialize_str("uniform"),
    }
}

/// Each row's mean latency over the baseline's.
pub fn compute_slowdowns(rows: &[AblationRow], baseline: &str) -> Result<Vec<(String, f64)>> {
    let base = rows
        .iter()
        .find(|r| r.config == baseline)
        .ok_or_else(|| Error::InvalidParameter(format!("baseline {baseline:?} not found")))?;
    Ok(rows
        .iter()
        .map(|r| (r.config.clone(), r.latency_ms / base.latency_ms))
        .collect())
}

/// The static row with the lowest mean latency.
pub fn best_static(rows: &[AblationRow]) -> Option<&AblationRow> {
    rows.iter()
        .filter(|r| r.is_static())
        .min_by(|a, b| a.latency_ms.total_cmp(&b.latency_ms))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, ms: f64) -> AblationRow {
        AblationRow {
            config: name.into(),
            scheduler: "constant".into(),
            latency_ms: ms,
            std_ms: 0.0,
            reported_slowdown: 0.0,
            distribution: None,
            note: String::new(),
        }
    }

    #[test]
    fn ratios_against_baseline() {
        let rows = vec![row("static-512", 891.51), row("sampled", 932.69), row("guarded", 903.03)];
        let s = compute_slowdowns(&rows, "static-512").unwrap();
        assert_eq!(s[0].1, 1.0);
        assert!((s[1].1 - 1.0462).abs() < 0.0005);
        assert!((s[2].1 - 1.0129).abs() < 0.0005);
        assert!(compute_slowdowns(&rows, "missing").is_err());
        assert_eq!(best_static(&rows).unwrap().config, "static-512");
    }
}
