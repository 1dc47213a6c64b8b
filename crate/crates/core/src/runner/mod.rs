//! Experiment configs, sweep execution and result reports.
//!
//! A run expands a config into independent cells (activation × seed), runs
//! them on a worker pool and writes, through a single collector:
//!
//! - `manifest.json`: config echo, tool version and per-cell status;
//! - `results.csv`: one row per (experiment, config hash, seed, metric);
//! - `traces/`: per-cell trace CSVs;
//! - `timestamps.json`: wall-clock data, kept apart so the other files are
//!   byte-identical across reruns.

pub mod config;
pub mod continual;
mod execute;
pub mod groups;
pub mod presets;
pub mod report;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    config_hash, ActivationSet, Cell, CellSpec, ExperimentConfig, ExperimentKind, StreamSection,
};
pub use continual::{
    run_continual, ContinualConfig, ContinualOutcome, Diagnostics, DiagnosticsConfig, ReplayConfig,
};
pub use execute::{execute_cell, CellOutput, MetricRow};
pub use groups::{floor_class, sidedness, FloorClass, Sidedness};
pub use report::{report, ReportKind, ReportOutcome};

use crate::activation::ActivationSpec;
use crate::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";
pub const RESULTS: &str = "results.csv";
pub const TIMESTAMPS: &str = "timestamps.json";
pub const TRACES: &str = "traces";
pub const RESULT_COLUMNS: [&str; 6] = ["experiment", "config_hash", "seed", "metric", "value", "units"];

/// One metric of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub units: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub index: usize,
    pub experiment: String,
    pub label: String,
    pub seed: u64,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<ActivationSpec>,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub rows: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            position: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; 0 uses the available parallelism.
    pub jobs: usize,
    pub overwrite: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            jobs: 1,
            overwrite: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub cells: usize,
    pub failed: usize,
    pub rows: usize,
    pub warnings: Vec<String>,
}

/// Output directory for a config: the explicit override, the config's own
/// `output_dir`, or `results/<name>`.
pub fn output_dir(cfg: &ExperimentConfig, override_dir: Option<&Path>) -> PathBuf {
    override_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(&cfg.name))
}

/// Run every cell of `cfg` and write the result files into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, opts: RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    prepare_dir(out_dir, opts.overwrite)?;
    let cells = cfg.cells()?;
    let mut warnings = Vec::new();
    if cells.is_empty() {
        let msg = "empty sweep grid: no cells to run".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let started = unix_seconds();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))?;
    let outputs: Vec<(Result<CellOutput>, f64)> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let t0 = Instant::now();
                let out = catch_unwind(AssertUnwindSafe(|| execute_cell(cell))).unwrap_or_else(|panic| {
                    let msg = panic
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| panic.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "unknown panic".into());
                    Err(Error::config(format!("cell panicked: {msg}")))
                });
                (out, t0.elapsed().as_secs_f64())
            })
            .collect()
    });

    // Single collector: everything below runs sequentially in cell order.
    let mut records = Vec::with_capacity(cells.len());
    let mut rows = Vec::new();
    let mut durations = Vec::with_capacity(cells.len());
    for (cell, (out, secs)) in cells.iter().zip(outputs) {
        durations.push(serde_json::json!({ "cell": cell.index, "seconds": secs }));
        let experiment = format!("{}/{}", cfg.name, cell.label);
        let activation = execute::cell_activation(&cell.spec);
        let mut record = CellRecord {
            index: cell.index,
            experiment: experiment.clone(),
            label: cell.label.clone(),
            seed: cell.seed,
            config_hash: cell.config_hash.clone(),
            activation,
            status: CellStatus::Ok,
            error: None,
            rows: 0,
            traces: Vec::new(),
        };
        match out {
            Ok(output) => {
                record.rows = output.rows.len();
                for t in &output.traces {
                    let name = format!(
                        "{:04}_{}_s{}_{}.csv",
                        cell.index,
                        sanitize(&cell.label),
                        cell.seed,
                        t.0
                    );
                    let dir = out_dir.join(TRACES);
                    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                    let path = dir.join(&name);
                    fs::write(&path, &t.1).map_err(|e| Error::io(&path, e))?;
                    record.traces.push(format!("{TRACES}/{name}"));
                }
                for r in output.rows {
                    rows.push(ResultRow {
                        experiment: match &r.suffix {
                            Some(s) => format!("{experiment}/{s}"),
                            None => experiment.clone(),
                        },
                        config_hash: cell.config_hash.clone(),
                        seed: r.seed.unwrap_or(cell.seed),
                        metric: r.metric,
                        value: r.value,
                        units: r.units.to_string(),
                    });
                }
            }
            Err(e) => {
                log::warn!(
                    "cell {} ({}, seed {}) failed: {e}",
                    cell.index,
                    cell.label,
                    cell.seed
                );
                record.status = CellStatus::Failed;
                record.error = Some(e.to_string());
            }
        }
        records.push(record);
    }

    write_results(&out_dir.join(RESULTS), &rows)?;
    let failed = records.iter().filter(|r| r.status == CellStatus::Failed).count();
    let manifest = Manifest {
        tool: "plasticity".into(),
        version: TOOL_VERSION.into(),
        config: cfg.clone(),
        cells: records,
        warnings: warnings.clone(),
    };
    write_json(&out_dir.join(MANIFEST), &manifest)?;
    write_json(
        &out_dir.join(TIMESTAMPS),
        &serde_json::json!({ "started": started, "finished": unix_seconds(), "cells": durations }),
    )?;
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        cells: cells.len(),
        failed,
        rows: rows.len(),
        warnings,
    })
}

fn prepare_dir(dir: &Path, overwrite: bool) -> Result<()> {
    let existing = [MANIFEST, RESULTS, TIMESTAMPS, TRACES]
        .iter()
        .any(|f| dir.join(f).exists());
    if existing && !overwrite {
        return Err(Error::OutputExists(dir.to_path_buf()));
    }
    if existing {
        for f in [MANIFEST, RESULTS, TIMESTAMPS] {
            let p = dir.join(f);
            if p.exists() {
                fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
        let traces = dir.join(TRACES);
        if traces.exists() {
            fs::remove_dir_all(&traces).map_err(|e| Error::io(&traces, e))?;
        }
        let reports = dir.join(report::REPORT_DIR);
        if reports.exists() {
            fs::remove_dir_all(&reports).map_err(|e| Error::io(&reports, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let err = |e: csv::Error| Error::config(format!("writing {}: {e}", path.display()));
    w.write_record(RESULT_COLUMNS).map_err(err)?;
    for r in rows {
        w.write_record([
            r.experiment.as_str(),
            &r.config_hash,
            &r.seed.to_string(),
            &r.metric,
            &r.value.to_string(),
            &r.units,
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let source = path.display().to_string();
    let headers = rdr.headers().map_err(|e| csv_parse(&source, e))?.clone();
    if headers.iter().ne(RESULT_COLUMNS) {
        return Err(Error::Parse {
            source_name: source,
            position: "line 1".into(),
            message: format!("expected columns {}", RESULT_COLUMNS.join(",")),
        });
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| csv_parse(&source, e)))
        .collect()
}

fn csv_parse(source: &str, e: csv::Error) -> Error {
    Error::Parse {
        source_name: source.to_string(),
        position: e
            .position()
            .map_or_else(|| "unknown position".into(), |p| format!("line {}", p.line())),
        message: e.to_string(),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::config(format!("json: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn unix_seconds() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn sanitize(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    s.chars().take(60).collect()
}
