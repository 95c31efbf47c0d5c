//! `chunksched`: reproducible runs over the scheduling workbench.
//!
//! Every run writes its outputs plus `manifest.json` to the output directory.
//! Errors go to stderr as a single JSON object and exit nonzero.

mod commands;
mod config;
mod output;
mod parse;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{CommandFactory, FromArgMatches, Parser};
use serde_json::json;

use chunksched::workload::checksums;

use commands::{CheckFailed, Command, ReplayArgs};
use config::{Config, ConfigError};
use output::{RunManifest, Sink};

const DEFAULT_OUT: &str = "chunksched-out";

#[derive(Debug, Parser)]
#[command(name = "chunksched", version, about = "Entropy-guided chunk scheduling workbench")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "CHUNKSCHED_OUT")]
    out: Option<PathBuf>,
    /// JSON file overriding configuration defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Histogram bin count.
    #[arg(long, global = true)]
    bins: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Failure in rerunning a manifest.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct ReplayMismatch(String);

fn resolve_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(k) = cli.bins {
        cfg.bins = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cmd: &Command, cfg: &Config, out: &Path) -> anyhow::Result<RunManifest> {
    let mut sink = Sink::new(out.to_path_buf())?;
    commands::run(cmd, cfg, &mut sink)?;
    let manifest = RunManifest {
        command: cmd.name().into(),
        args: serde_json::to_value(cmd)?,
        config: cfg.clone(),
        seed: cfg.seed,
        fixture_checksums: checksums(),
        version: env!("CARGO_PKG_VERSION").into(),
        timestamp: 0,
        outputs: Vec::new(),
    };
    sink.finish(manifest)
}

fn replay(a: &ReplayArgs, out: &Path) -> anyhow::Result<()> {
    let old = RunManifest::load(&a.manifest)?;
    let cmd: Command = serde_json::from_value(old.args.clone()).context("manifest args do not describe a command")?;
    old.config.validate()?;
    if old.fixture_checksums != checksums() {
        return Err(ReplayMismatch("manifest was recorded against different fixtures".into()).into());
    }
    let new = execute(&cmd, &old.config, out)?;
    let mut bad = Vec::new();
    for o in &old.outputs {
        match new.outputs.iter().find(|n| n.name == o.name) {
            Some(n) if n.sha256 == o.sha256 => println!("{}: identical", o.name),
            Some(_) => bad.push(format!("{} differs", o.name)),
            None => bad.push(format!("{} missing", o.name)),
        }
    }
    if bad.is_empty() {
        println!("replay of {} byte-identical: PASS", old.command);
        Ok(())
    } else {
        println!("replay of {}: FAIL", old.command);
        Err(ReplayMismatch(bad.join(", ")).into())
    }
}

fn kind(e: &anyhow::Error) -> &'static str {
    if e.downcast_ref::<ConfigError>().is_some() {
        "invalid_config"
    } else if e.downcast_ref::<CheckFailed>().is_some() {
        "check_failed"
    } else if e.downcast_ref::<ReplayMismatch>().is_some() {
        "replay_mismatch"
    } else if let Some(err) = e.downcast_ref::<chunksched::Error>() {
        err.kind()
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        "io"
    } else {
        "error"
    }
}

fn report(kind: &str, message: String, command: Option<&str>) {
    let rec = json!({ "error": { "kind": kind, "message": message, "command": command } });
    eprintln!("{rec}");
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report("usage", e.to_string().trim_end().to_string(), None);
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            report("usage", e.to_string(), None);
            return ExitCode::from(2);
        }
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let name = cli.command.name();
    let result = match &cli.command {
        Command::Replay(a) => replay(a, &out),
        cmd => resolve_config(&cli).and_then(|cfg| execute(cmd, &cfg, &out).map(|_| ())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(kind(&e), format!("{e:#}"), Some(name));
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
