//! Command-line front end for the `tavis` library: config handling, CSV and
//! SVG output and a JSON metadata sidecar per run.

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

use std::path::PathBuf;
use std::time::Instant;

use serde_json::json;

pub use config::{Command, Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config keys or parameter values (exit code 1).
    #[error("{0}")]
    Config(String),
    /// Numerical or I/O failure (exit code 2).
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn config(field: &str, reason: &str) -> Self {
        CliError::Config(format!("invalid `{field}`: {reason}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl From<tavis::Error> for CliError {
    fn from(e: tavis::Error) -> Self {
        match e {
            tavis::Error::InvalidParam { .. } | tavis::Error::Budget { .. } | tavis::Error::Domain(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Internal(other.to_string()),
        }
    }
}

fn write_file(path: &std::path::Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

/// Runs `cfg` and writes its outputs, the resolved config and the sidecar
/// into `cfg.out_dir`. Returns the paths written.
pub fn execute(cfg: &RunConfig, n_max_auto: bool) -> Result<Vec<PathBuf>, CliError> {
    let started = Instant::now();
    let outcome = commands::run(cfg)?;
    let wall = started.elapsed().as_secs_f64();

    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for (name, body) in &outcome.files {
        let p = dir.join(name);
        write_file(&p, body)?;
        written.push(p);
    }
    let cfg_path = dir.join("config.json");
    config::write_config(cfg, &cfg_path)?;
    written.push(cfg_path);

    let names: Vec<&str> = outcome.files.iter().map(|(n, _)| n.as_str()).chain(["config.json"]).collect();
    let meta = json!({
        "command": cfg.command.name(),
        "version": tavis::VERSION,
        "config": cfg,
        "n_max_auto": n_max_auto,
        "flags": {
            "converged": outcome.converged,
            "cutoff_touched": outcome.cutoff_touched,
        },
        "wall_time_s": wall,
        "workers": tavis::par::workers(),
        "outputs": names,
        "extras": outcome.extras,
    });
    let meta_path = dir.join(format!("{}.json", cfg.command.stem()));
    let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&meta_path, &(text + "\n"))?;
    written.push(meta_path);
    Ok(written)
}

/// Sizes the worker pool from `TAVIS_WORKERS` when set.
pub fn workers_from_env() -> Result<(), CliError> {
    match std::env::var("TAVIS_WORKERS") {
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| CliError::config("TAVIS_WORKERS", "expected a positive integer"))?;
            if n == 0 {
                return Err(CliError::config("TAVIS_WORKERS", "expected a positive integer"));
            }
            tavis::par::set_workers(n);
            Ok(())
        }
        Err(_) => Ok(()),
    }
}
