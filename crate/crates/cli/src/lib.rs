//! Config-driven experiment runner for `udplab`.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod output;

use std::path::Path;

use anyhow::Result;

use config::ExperimentConfig;
use output::Manifest;

pub const RESOLVED_CONFIG: &str = "resolved.toml";

/// Runs `cfg` and writes its outputs, `resolved.toml` and the manifest under `out`.
/// Nothing is written if the experiment fails.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    let mut artifacts = experiments::run_experiment(cfg)?;
    let mut resolved = cfg.clone();
    resolved.out = out.to_path_buf();
    artifacts.add(RESOLVED_CONFIG, resolved.to_toml());
    artifacts.write(out)
}
