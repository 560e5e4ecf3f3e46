//! Config-driven experiment runner for the degenerate wave study.

// Bounds are written as negated comparisons so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod plot;

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::config::{ConfigError, ExperimentConfig};
use crate::experiments::{run_experiment, Report};
use crate::plot::render_svg;

pub const VERSION: &str = concat!("gwl ", env!("CARGO_PKG_VERSION"));
pub const OUTPUT_DIR_ENV: &str = "GWL_OUTPUT_DIR";

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAILED_CHECK: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] gwl_core::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("usage error: {0}")]
    Usage(String),
}

impl LabError {
    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        }
    }
}

/// Outcome of `run`: the report, where it went, and whether checks gate the exit code.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: Report,
    pub advisory: bool,
    pub directory: PathBuf,
    pub files: Vec<String>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.advisory || self.report.checks.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> u8 {
        if self.passed() {
            EXIT_PASS
        } else {
            EXIT_FAILED_CHECK
        }
    }

    /// One line per check plus a closing verdict.
    pub fn lines(&self, experiment: &str) -> Vec<String> {
        let mut out: Vec<String> = self
            .report
            .checks
            .iter()
            .map(|c| {
                let tag = match (self.advisory, c.passed) {
                    (true, _) => "ADVISORY",
                    (false, true) => "PASS",
                    (false, false) => "FAIL",
                };
                format!("{tag} {experiment} {}: {}", c.name, c.detail)
            })
            .collect();
        let verdict = if self.advisory {
            "ADVISORY".to_string()
        } else if self.passed() {
            "PASS".to_string()
        } else {
            "FAIL".to_string()
        };
        let passed = self.report.checks.iter().filter(|c| c.passed).count();
        out.push(format!(
            "{verdict} {experiment}: {passed}/{} checks, results in {}",
            self.report.checks.len(),
            self.directory.display()
        ));
        out
    }
}

fn write(dir: &Path, name: &str, content: &str, files: &mut Vec<String>) -> Result<(), LabError> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|source| LabError::Io { path, source })?;
    files.push(name.to_string());
    Ok(())
}

/// Output directory, with `GWL_OUTPUT_DIR` taking precedence over the config.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => cfg.output.directory.clone(),
    }
}

/// Runs the configured experiment and writes its artifacts into `dir`.
pub fn run_config(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutcome, LabError> {
    let report = run_experiment(cfg)?;
    std::fs::create_dir_all(dir).map_err(|source| LabError::Io { path: dir.to_path_buf(), source })?;
    let mut files = Vec::new();
    if cfg.wants("csv") {
        for (stem, table) in &report.tables {
            write(dir, &format!("{stem}.csv"), &table.to_csv(), &mut files)?;
        }
    }
    if cfg.wants("svg") {
        for (stem, plot) in &report.plots {
            write(dir, &format!("{stem}.svg"), &render_svg(plot)?, &mut files)?;
        }
    }
    let advisory = cfg.output.advisory;
    let mut outcome = RunOutcome { report, advisory, directory: dir.to_path_buf(), files };
    if cfg.wants("json") {
        let checks: Vec<_> = outcome
            .report
            .checks
            .iter()
            .map(|c| json!({ "name": c.name, "passed": c.passed, "detail": c.detail }))
            .collect();
        let mut files = outcome.files.clone();
        files.push("summary.json".into());
        let summary = json!({
            "version": VERSION,
            "experiment": cfg.experiment,
            "advisory": advisory,
            "passed": if advisory { serde_json::Value::Null } else { outcome.passed().into() },
            "checks": checks,
            "metrics": outcome.report.metrics,
            "files": files,
            "config": cfg,
        });
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
        write(dir, "summary.json", &text, &mut outcome.files)?;
    }
    Ok(outcome)
}

/// Loads `path`, runs it, and writes the artifacts.
pub fn run(path: &Path) -> Result<(ExperimentConfig, RunOutcome), LabError> {
    let cfg = ExperimentConfig::load(path)?;
    let dir = output_dir(&cfg);
    let outcome = run_config(&cfg, &dir)?;
    Ok((cfg, outcome))
}
