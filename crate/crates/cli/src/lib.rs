//! Config-driven runner for the qtherm experiments.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod selftest;
pub mod table1;

use std::path::{Path, PathBuf};

use config::{ExperimentConfig, Kind};
use error::CliResult;
use output::{results_document, write_all, Format};

pub fn kind_name(kind: Kind) -> String {
    serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

/// Runs `cfg` and writes its artifacts. Nothing is written unless the run
/// succeeds.
pub fn run_and_write(cfg: &ExperimentConfig, format: Format) -> CliResult<(PathBuf, Vec<String>)> {
    let kind = kind_name(cfg.kind());
    let artifacts = experiments::run_experiment(cfg)?;
    let doc = results_document(&kind, cfg, &artifacts.results)?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| Path::new("results").join(&kind));
    let written = write_all(&dir, &doc, &artifacts, format)?;
    Ok((dir, written))
}
