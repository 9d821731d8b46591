//! Command-line front end: argument parsing and exit codes.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;

/// Success.
pub const EXIT_OK: u8 = 0;
/// Usage error, unreadable or invalid config.
pub const EXIT_INVALID: u8 = 1;
/// The experiment failed while running.
pub const EXIT_RUNTIME: u8 = 2;

/// Runs udplab experiments from a TOML config.
#[derive(Parser)]
#[command(name = "udplab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a config, train, analyze and write the outputs.
    Run {
        config: PathBuf,
        /// Output directory; overrides UDPLAB_OUT and the config's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Report every config violation without running.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig, u8> {
    let cfg = ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e:#}");
        EXIT_INVALID
    })?;
    let problems = cfg.validate();
    if problems.is_empty() {
        return Ok(cfg);
    }
    eprintln!("error: invalid config {}", path.display());
    for p in problems {
        eprintln!("  {p}");
    }
    Err(EXIT_INVALID)
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(_) => {
                println!("{} is valid", config.display());
                EXIT_OK
            }
            Err(code) => code,
        },
        Command::Run { config, out, seed } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out
                .or_else(|| std::env::var_os("UDPLAB_OUT").map(PathBuf::from))
                .unwrap_or_else(|| cfg.out.clone());
            match crate::run(&cfg, &dir) {
                Ok(manifest) => {
                    println!("wrote {} files to {}", manifest.entries.len() + 1, dir.display());
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    EXIT_RUNTIME
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scratch(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("udplab-cli-{name}-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("config.toml");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn exit_codes() {
        let dir = scratch("codes");
        let ok = write(&dir, "experiment = \"ldp-failure\"\nseed = 1\n[linearsim]\nldp_steps = 50\n[sweep]\nreplicas = 2\n");
        let out = dir.join("out");
        let args = ["udplab", "run", ok.to_str().unwrap(), "--out", out.to_str().unwrap()];
        assert_eq!(main_with(args), EXIT_OK);
        assert!(out.join("manifest.csv").exists());
        assert!(out.join(crate::RESOLVED_CONFIG).exists());
        assert_eq!(main_with(["udplab", "validate", ok.to_str().unwrap()]), EXIT_OK);

        let bad = dir.join("bad.toml");
        std::fs::write(&bad, "experiment = \"toy-boundary\"\nseed = 1\nmethods = [\"trades\"]\n[train]\nlambda = 1.5\n").unwrap();
        assert_eq!(main_with(["udplab", "validate", bad.to_str().unwrap()]), EXIT_INVALID);
        assert_eq!(main_with(["udplab", "run", bad.to_str().unwrap()]), EXIT_INVALID);
        assert_eq!(main_with(["udplab", "validate", "/nonexistent/config.toml"]), EXIT_INVALID);
        assert_eq!(main_with(["udplab", "frobnicate"]), EXIT_INVALID);

        // Nothing lies above the fit floor, so the rate fit fails.
        let failing = write(&dir, "experiment = \"theorem1\"\nseed = 1\n[linearsim]\nomega0 = 1.0\nfit_floor = 1e9\nsteps = 5\nreplicas = 10\n");
        let out2 = dir.join("out2");
        let args = ["udplab", "run", failing.to_str().unwrap(), "--out", out2.to_str().unwrap()];
        assert_eq!(main_with(args), EXIT_RUNTIME);
        assert!(!out2.exists());
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn seed_override_changes_outputs() {
        let dir = scratch("seed");
        let cfg = write(&dir, "experiment = \"ldp-failure\"\nseed = 1\n[linearsim]\nldp_steps = 50\n[sweep]\nreplicas = 2\n");
        let run = |seed: &str, sub: &str| {
            let out = dir.join(sub);
            let args = ["udplab", "run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed];
            assert_eq!(main_with(args), EXIT_OK);
            std::fs::read(out.join("summary.csv")).unwrap()
        };
        assert_eq!(run("5", "a"), run("5", "b"));
        assert_ne!(run("5", "a"), run("6", "c"));
        std::fs::remove_dir_all(dir).unwrap();
    }
}
