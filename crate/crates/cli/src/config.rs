//! Run configuration: defaults, optional JSON file, validation.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use chunksched::entropy::{EmaState, HistogramSpec};
use chunksched::fusion::experiment::default_budget;
use chunksched::fusion::{FusionWeights, ResourceBudget};
use chunksched::policy::{CalibrationRef, ChunkBounds, PolicyVariant, SchedulerPolicy};

/// Marks errors raised while loading or validating configuration.
#[derive(Debug, thiserror::Error)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bins: usize,
    pub epsilon: f64,
    pub c_min: usize,
    pub c_max: usize,
    /// `log_k`, `legacy`, or a positive number of nats.
    pub href: String,
    pub weights: FusionWeights,
    pub budget: ResourceBudget,
    pub ema_decay: f64,
    pub buckets: Vec<usize>,
    pub seed: u64,
    /// Seeds for the rotation sweep.
    pub seeds: Vec<u64>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bins: 256,
            epsilon: 1e-8,
            c_min: 32,
            c_max: 512,
            href: "log_k".into(),
            weights: FusionWeights::default(),
            budget: default_budget(),
            ema_decay: 0.85,
            buckets: vec![32, 64, 128, 256, 512],
            seed: 0,
            seeds: (0..35).collect(),
        }
    }
}

/// Where the rule's reference entropy comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Href {
    LogK,
    Legacy,
    Fixed(f64),
}

impl FromStr for Href {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "log_k" | "log-k" | "logk" => Ok(Href::LogK),
            "legacy" => Ok(Href::Legacy),
            other => other
                .parse::<f64>()
                .map(Href::Fixed)
                .map_err(|_| format!("href {s:?} is not log_k, legacy or a number")),
        }
    }
}

impl Href {
    pub fn calibration(self, bins: usize) -> chunksched::Result<CalibrationRef> {
        match self {
            Href::LogK => CalibrationRef::log_k(bins),
            Href::Legacy => Ok(CalibrationRef::legacy()),
            Href::Fixed(h) => CalibrationRef::fixed(h),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Config = serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Checks every field against the precondition of the module that uses it.
    pub fn validate(&self) -> anyhow::Result<()> {
        let wrap = |what: &str, e: chunksched::Error| ConfigError(format!("{what}: {e}"));
        self.spec().map_err(|e| wrap("histogram", e))?;
        self.bounds().map_err(|e| wrap("bounds", e))?;
        let href: Href = self.href.parse().map_err(ConfigError)?;
        href.calibration(self.bins).map_err(|e| wrap("href", e))?;
        self.weights.validate().map_err(|e| wrap("weights", e))?;
        self.budget.validate().map_err(|e| wrap("budget", e))?;
        EmaState::new(self.ema_decay, 0.0).map_err(|e| wrap("ema_decay", e))?;
        let first = *self.buckets.first().ok_or_else(|| ConfigError("buckets: empty".into()))?;
        SchedulerPolicy::new(PolicyVariant::Static { chunk: first }, self.buckets.clone())
            .map_err(|e| wrap("buckets", e))?;
        if self.seeds.is_empty() {
            bail!(ConfigError("seeds: empty".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> chunksched::Result<HistogramSpec> {
        HistogramSpec::new(self.bins, self.epsilon)
    }

    pub fn bounds(&self) -> chunksched::Result<ChunkBounds> {
        ChunkBounds::new(self.c_min, self.c_max)
    }

    pub fn calibration(&self) -> anyhow::Result<CalibrationRef> {
        let href: Href = self.href.parse().map_err(ConfigError)?;
        Ok(href.calibration(self.bins)?)
    }

    pub fn budget(&self) -> ResourceBudget {
        self.budget
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_fields() {
        let bad = [
            Config { bins: 1, ..Default::default() },
            Config { epsilon: 0.0, ..Default::default() },
            Config { c_min: 48, ..Default::default() },
            Config { href: "nope".into(), ..Default::default() },
            Config { href: "-1".into(), ..Default::default() },
            Config { ema_decay: 1.0, ..Default::default() },
            Config { buckets: vec![256, 128], ..Default::default() },
            Config { seeds: vec![], ..Default::default() },
        ];
        for c in bad {
            let e = c.validate().unwrap_err();
            assert!(e.downcast_ref::<ConfigError>().is_some(), "{e}");
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: Config = serde_json::from_str(r#"{"bins": 64, "href": "legacy"}"#).unwrap();
        assert_eq!(c.bins, 64);
        assert_eq!(c.c_max, 512);
        assert_eq!(c.calibration().unwrap(), CalibrationRef::legacy());
        assert!(serde_json::from_str::<Config>(r#"{"binz": 64}"#).is_err());

        let c: Config = serde_json::from_str(r#"{"weights": {"alpha": 0.0}}"#).unwrap();
        assert_eq!(c.weights.alpha, 0.0);
        assert_eq!(c.weights.tau, FusionWeights::default().tau);
    }

    #[test]
    fn href_forms() {
        assert_eq!("log-k".parse::<Href>().unwrap(), Href::LogK);
        assert_eq!("LEGACY".parse::<Href>().unwrap(), Href::Legacy);
        assert_eq!("6.0".parse::<Href>().unwrap(), Href::Fixed(6.0));
    }
}
