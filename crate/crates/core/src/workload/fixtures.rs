//! Embedded measurement tables.
//!
//! Every table is a versioned CSV under `fixtures/` with a header row and a
//! pinned SHA-256. The same files can be loaded from a directory instead; a
//! file whose digest differs from the pin is rejected.
//!
//! | File | Columns |
//! |------|---------|
//! | `chunk_sweep.v1.csv` | config, chunk, calls, latency_ms, std_ms, seq_len, reported_speedup |
//! | `kernel_summary.v1.csv` | policy, calibration, chunk, latency_ms, std_ms, reported_speedup |
//! | `perturbation.v1.csv` | distribution, entropy_nats, chunk, calls, latency_ms, std_ms, reported_speedup, seq_len |
//! | `routed_ablation.v1.csv` | config, scheduler, latency_ms, std_ms, reported_slowdown, distribution, note |
//! | `mixed_regime.v1.csv` | regime, approx_tokens, chunk, mean_ms, std_ms |
//! | `href_ablation.v1.csv` | h_ref_kind, h_ref_param, scenario, entropy_nats, reported_r, chunk, latency_ms |
//! | `bin_sensitivity.v1.csv` | distribution, bins, entropy_nats, log_k, ratio, chunk_log_k, chunk_legacy, latency_ms |

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ablation::AblationRow;
use super::model::SweepPoint;
use super::regime::RegimeRecord;
use crate::error::{Error, Result};
use crate::policy::{CalibrationMode, CalibrationRef};

/// A fixture file and its pinned digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureFile {
    pub name: &'static str,
    pub sha256: &'static str,
    pub embedded: &'static str,
}

pub const FIXTURES: [FixtureFile; 7] = [
    FixtureFile {
        name: "chunk_sweep.v1.csv",
        sha256: "8ec86f8ff322f829763d10248bf72eae5929629cfcbca4bcc61e712a1f322a4d",
        embedded: include_str!("../../fixtures/chunk_sweep.v1.csv"),
    },
    FixtureFile {
        name: "kernel_summary.v1.csv",
        sha256: "4acebc4b1a60dfb2df29e0df77f415e7c7356aa721c15503475a72b93306a39d",
        embedded: include_str!("../../fixtures/kernel_summary.v1.csv"),
    },
    FixtureFile {
        name: "perturbation.v1.csv",
        sha256: "72344915a6d7277a0cbfd9ad1e15b01981d0016a7334dfc3bf41c228caf0af48",
        embedded: include_str!("../../fixtures/perturbation.v1.csv"),
    },
    FixtureFile {
        name: "routed_ablation.v1.csv",
        sha256: "63499d4a0fc7786d09bc49cffeca44fcc9aa10f66e68b227f49077843231d5f3",
        embedded: include_str!("../../fixtures/routed_ablation.v1.csv"),
    },
    FixtureFile {
        name: "mixed_regime.v1.csv",
        sha256: "ae40ba6531fd66b09186bf60f44ffbcfbf889136fa3e39a06cbeed47ade6a03a",
        embedded: include_str!("../../fixtures/mixed_regime.v1.csv"),
    },
    FixtureFile {
        name: "href_ablation.v1.csv",
        sha256: "dda9c45093877afbff08b89a688be07e3fa80541557e96481733d1d4483c440e",
        embedded: include_str!("../../fixtures/href_ablation.v1.csv"),
    },
    FixtureFile {
        name: "bin_sensitivity.v1.csv",
        sha256: "c7b36e938625b843390886508002ab06a11fc6d840163044b95f5b3cdc0f500c",
        embedded: include_str!("../../fixtures/bin_sensitivity.v1.csv"),
    },
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `name → pinned digest` for every fixture.
pub fn checksums() -> BTreeMap<String, String> {
    FIXTURES.iter().map(|f| (f.name.to_string(), f.sha256.to_string())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSummaryRow {
    pub policy: String,
    /// `static`, `legacy` or `log_k`.
    pub calibration: String,
    pub chunk: usize,
    pub latency_ms: f64,
    pub std_ms: f64,
    pub reported_speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRow {
    pub distribution: String,
    pub entropy_nats: f64,
    pub chunk: usize,
    pub calls: usize,
    pub latency_ms: f64,
    pub std_ms: f64,
    pub reported_speedup: f64,
    pub seq_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub regime: String,
    pub approx_tokens: usize,
    pub chunk: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrefRow {
    /// `log_k` (parameter is `K`) or `fixed` (parameter is the reference).
    pub h_ref_kind: String,
    pub h_ref_param: f64,
    pub scenario: String,
    pub entropy_nats: f64,
    pub reported_r: f64,
    pub chunk: usize,
    pub latency_ms: f64,
}

impl HrefRow {
    pub fn calibration(&self) -> Result<CalibrationRef> {
        match self.h_ref_kind.as_str() {
            "log_k" => CalibrationRef::log_k(self.h_ref_param as usize),
            "fixed" => {
                let mut c = CalibrationRef::fixed(self.h_ref_param)?;
                if self.h_ref_param == crate::policy::LEGACY_H_REF {
                    c.mode = CalibrationMode::LegacyFixed;
                }
                Ok(c)
            }
            other => Err(Error::Fixture {
                name: "href_ablation.v1.csv".into(),
                reason: format!("unknown h_ref kind {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSensitivityRow {
    pub distribution: String,
    pub bins: usize,
    pub entropy_nats: f64,
    pub log_k: f64,
    pub ratio: f64,
    pub chunk_log_k: usize,
    pub chunk_legacy: usize,
    pub latency_ms: f64,
}

/// All tables, parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixtures {
    pub chunk_sweep: Vec<SweepPoint>,
    pub kernel_summary: Vec<KernelSummaryRow>,
    pub perturbation: Vec<PerturbationRow>,
    pub routed_ablation: Vec<AblationRow>,
    pub mixed_regime: Vec<RegimeRecord>,
    pub href_ablation: Vec<HrefRow>,
    pub bin_sensitivity: Vec<BinSensitivityRow>,
    /// Digest of each file actually parsed.
    pub checksums: BTreeMap<String, String>,
}

fn parse<T: DeserializeOwned>(name: &str, text: &str) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Fixture {
            name: name.into(),
            reason: e.to_string(),
        })
}

impl Fixtures {
    /// The copies compiled into the binary.
    pub fn embedded() -> Result<Self> {
        Self::from_texts(|f| Ok(f.embedded.to_string()))
    }

    /// Files of the same names from `dir`, each checked against its pin.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        Self::from_texts(|f| Ok(fs::read_to_string(dir.join(f.name))?))
    }

    fn from_texts(mut read: impl FnMut(&FixtureFile) -> Result<String>) -> Result<Self> {
        let mut texts = BTreeMap::new();
        let mut sums = BTreeMap::new();
        for f in &FIXTURES {
            let text = read(f)?;
            let actual = sha256_hex(text.as_bytes());
            if actual != f.sha256 {
                return Err(Error::ChecksumMismatch {
                    name: f.name.into(),
                    expected: f.sha256.into(),
                    actual,
                });
            }
            sums.insert(f.name.to_string(), actual);
            texts.insert(f.name, text);
        }
        let t = |name: &str| texts[name].as_str();
        let regimes: Vec<RegimeRow> = parse("mixed_regime.v1.csv", t("mixed_regime.v1.csv"))?;
        Ok(Self {
            chunk_sweep: parse("chunk_sweep.v1.csv", t("chunk_sweep.v1.csv"))?,
            kernel_summary: parse("kernel_summary.v1.csv", t("kernel_summary.v1.csv"))?,
            perturbation: parse("perturbation.v1.csv", t("perturbation.v1.csv"))?,
            routed_ablation: parse("routed_ablation.v1.csv", t("routed_ablation.v1.csv"))?,
            mixed_regime: RegimeRecord::from_rows(&regimes)?,
            href_ablation: parse("href_ablation.v1.csv", t("href_ablation.v1.csv"))?,
            bin_sensitivity: parse("bin_sensitivity.v1.csv", t("bin_sensitivity.v1.csv"))?,
            checksums: sums,
        })
    }
}
