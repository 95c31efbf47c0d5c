//! Output directory handling and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use chunksched::workload::fixtures::sha256_hex;

use crate::config::Config;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// The parsed subcommand arguments.
    pub args: serde_json::Value,
    /// Fully resolved configuration, flags applied.
    pub config: Config,
    pub seed: u64,
    pub fixture_checksums: BTreeMap<String, String>,
    pub version: String,
    /// Seconds since the Unix epoch. Not part of any output file.
    pub timestamp: u64,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

/// Collects the files a command writes.
#[derive(Debug)]
pub struct Sink {
    dir: PathBuf,
    outputs: Vec<OutputFile>,
}

impl Sink {
    pub fn new(dir: PathBuf) -> anyhow::Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            outputs: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.record(name, bytes);
        Ok(())
    }

    /// Registers a file written by someone else.
    pub fn record(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.push(OutputFile {
            name: name.into(),
            sha256: sha256_hex(bytes),
        });
    }

    /// Header row first, one record per row.
    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> anyhow::Result<()> {
        if rows.is_empty() {
            bail!("refusing to write {name} without rows");
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().context("flushing csv")?;
        self.put(name, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    pub fn finish(self, mut manifest: RunManifest) -> anyhow::Result<RunManifest> {
        manifest.outputs = self.outputs;
        manifest.timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let path = self.dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        a: u32,
        b: f64,
    }

    #[test]
    fn csv_has_header_and_digest() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Sink::new(dir.path().to_path_buf()).unwrap();
        s.csv("t.csv", &[Row { a: 1, b: 0.5 }]).unwrap();
        let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text, "a,b\n1,0.5\n");
        assert_eq!(s.outputs[0].sha256, sha256_hex(text.as_bytes()));
        assert!(s.csv::<Row>("empty.csv", &[]).is_err());
    }
}
