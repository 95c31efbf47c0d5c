//! Flat binary plus JSON manifest storage for scan fixtures.
//!
//! `<stem>.bin` holds little-endian `f64` sections back to back; `<stem>.json`
//! records the dimensions, each section's offset and count, and the SHA-256
//! of the binary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Coef, ScanOutput, ScanParams};
use crate::error::{Error, Result};

pub const FORMAT: &str = "scan-f64le-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    /// `constant` or `per_step` for coefficients, `dense` otherwise.
    pub layout: String,
    pub offset: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanManifest {
    pub format: String,
    pub d: usize,
    pub d_state: usize,
    pub len: usize,
    pub sections: Vec<Section>,
    pub sha256: String,
}

impl ScanManifest {
    fn section(&self, name: &str) -> Result<&Section> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Io(format!("manifest has no section {name:?}")))
    }
}

fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.bin")), dir.join(format!("{stem}.json")))
}

/// Writes params and, optionally, the matching output.
pub fn write_pair(
    dir: &Path,
    stem: &str,
    params: &ScanParams<f64>,
    output: Option<&ScanOutput<f64>>,
) -> Result<ScanManifest> {
    params.validate()?;
    let mut bytes = Vec::new();
    let mut sections = Vec::new();
    let mut push = |name: &str, layout: &str, values: &[f64]| {
        sections.push(Section {
            name: name.into(),
            layout: layout.into(),
            offset: bytes.len(),
            count: values.len(),
        });
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    };
    for (name, coef) in [("a", &params.a), ("b", &params.b), ("c", &params.c)] {
        match coef {
            Coef::Constant(v) => push(name, "constant", v),
            Coef::PerStep(v) => push(name, "per_step", v),
        }
    }
    push("skip", "dense", &params.skip);
    push("x", "dense", &params.x);
    if let Some(out) = output {
        push("y", "dense", &out.y);
    }

    let manifest = ScanManifest {
        format: FORMAT.into(),
        d: params.d,
        d_state: params.d_state,
        len: params.len,
        sections,
        sha256: hex::encode(Sha256::digest(&bytes)),
    };
    fs::create_dir_all(dir)?;
    let (bin, json) = paths(dir, stem);
    fs::write(bin, &bytes)?;
    fs::write(json, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads a pair back, checking format and checksum.
pub fn read_pair(dir: &Path, stem: &str) -> Result<(ScanParams<f64>, Option<ScanOutput<f64>>)> {
    let (bin, json) = paths(dir, stem);
    let manifest: ScanManifest = serde_json::from_str(&fs::read_to_string(json)?)?;
    if manifest.format != FORMAT {
        return Err(Error::Io(format!("unsupported format {:?}", manifest.format)));
    }
    let bytes = fs::read(bin)?;
    let actual = hex::encode(Sha256::digest(&bytes));
    if actual != manifest.sha256 {
        return Err(Error::ChecksumMismatch {
            name: stem.into(),
            expected: manifest.sha256.clone(),
            actual,
        });
    }

    let read = |s: &Section| -> Result<Vec<f64>> {
        let end = s.offset + s.count * 8;
        let raw = bytes
            .get(s.offset..end)
            .ok_or_else(|| Error::Io(format!("section {} runs past end of file", s.name)))?;
        Ok(raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect())
    };
    let coef = |name: &str| -> Result<Coef<f64>> {
        let s = manifest.section(name)?;
        let v = read(s)?;
        match s.layout.as_str() {
            "constant" => Ok(Coef::Constant(v)),
            "per_step" => Ok(Coef::PerStep(v)),
            other => Err(Error::Io(format!("unknown layout {other:?} for {name}"))),
        }
    };

    let params = ScanParams {
        d: manifest.d,
        d_state: manifest.d_state,
        len: manifest.len,
        a: coef("a")?,
        b: coef("b")?,
        c: coef("c")?,
        skip: read(manifest.section("skip")?)?,
        x: read(manifest.section("x")?)?,
    };
    params.validate()?;
    let output = match manifest.sections.iter().find(|s| s.name == "y") {
        Some(s) => {
            let y = read(s)?;
            if y.len() != params.d * params.len {
                return Err(Error::ShapeMismatch(format!("y holds {} values", y.len())));
            }
            Some(ScanOutput {
                d: params.d,
                len: params.len,
                y,
            })
        }
        None => None,
    };
    Ok((params, output))
}
