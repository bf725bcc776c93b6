//! Batch front end: config in, CSV and JSON out.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

pub use config::{validate_config, ConfigErrors, Diagnostic, ExperimentKind, RunConfig};
pub use experiments::{experiment_registry, Experiment};
pub use output::{OutputDir, Table};

/// Environment variable overriding the configured output directory.
pub const OUT_ENV: &str = "SPINCTL_OUT";

/// A failure after the configuration was accepted.
#[derive(Debug, thiserror::Error)]
#[error("{stage} failed: {message}")]
pub struct RunError {
    pub stage: String,
    pub message: String,
}

impl RunError {
    pub fn new(stage: &str, err: impl std::fmt::Display) -> Self {
        RunError { stage: stage.to_string(), message: err.to_string() }
    }

    pub fn solver(stage: &str, err: spinctl_core::optimizer::OptimizerError) -> Self {
        RunError::new(stage, err)
    }

    pub fn io(stage: &str, path: &Path, err: std::io::Error) -> Self {
        RunError { stage: stage.to_string(), message: format!("{}: {err}", path.display()) }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// `--grid N`.
    pub grid: Option<usize>,
    /// Output directory; wins over the config's `output`.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub config: RunConfig,
    pub files: Vec<String>,
    pub results: Value,
}

/// Applies command-line overrides, re-checking what they touch.
pub fn apply_options(mut cfg: RunConfig, opts: &RunOptions) -> Result<RunConfig, ConfigErrors> {
    if let Some(n) = opts.grid {
        if n < 8 {
            return Err(ConfigErrors(vec![Diagnostic {
                line: None,
                field: "--grid".into(),
                message: format!("must be at least 8, got {n}"),
            }]));
        }
        cfg.grid.n_steps = n;
    }
    if let Some(dir) = &opts.out_dir {
        cfg.output = dir.display().to_string();
    }
    Ok(cfg)
}

/// Runs a validated configuration, writes its files plus `report.json`.
pub fn run(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let registry = experiment_registry();
    let exp = registry.get(cfg.kind.name()).map_err(|e| RunError::new("select experiment", e))?;
    let mut out = OutputDir::create(&cfg.output)?;
    let results = exp.run(cfg, &mut out)?;
    let files = out.written().iter().filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect();
    let report = RunReport {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        started_unix: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        config: cfg.clone(),
        files,
        results,
    };
    out.write_json("report.json", &report)?;
    Ok(report)
}
