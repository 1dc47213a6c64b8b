//! Experiment configuration files (TOML) and their expansion into cells.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::continual::{ContinualConfig, DiagnosticsConfig, ReplayConfig};
use super::presets::{benchmark_best, class_incremental_best, sweep_grid};
use crate::activation::{ActivationKind, ActivationSpec};
use crate::metrics::WindowRule;
use crate::net::OptimizerKind;
use crate::props::canonical_specs;
use crate::streams::{DataSource, StreamConfig, StreamKind};
use crate::stress::{ShockSchedule, StressConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GoldilocksSweep,
    ShockStudy,
    ContinualBenchmark,
    RlMetrics,
    PropertyGrid,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GoldilocksSweep => "goldilocks_sweep",
            ExperimentKind::ShockStudy => "shock_study",
            ExperimentKind::ContinualBenchmark => "continual_benchmark",
            ExperimentKind::RlMetrics => "rl_metrics",
            ExperimentKind::PropertyGrid => "property_grid",
        }
    }
}

/// Which activations an experiment covers. All lists are concatenated in
/// the order `canonical`, `sweep`, `specs`, `tuned`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActivationSet {
    /// The canonical parameterization of every implemented kind.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub canonical: bool,
    /// Full hyper-parameter sweep grids, by kind.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<ActivationKind>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub specs: Vec<ActivationSpec>,
    /// Tuned best settings (activation and learning rate) for `benchmark`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub tuned: Vec<String>,
    /// A benchmark name, or `class_incremental`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
}

/// Stream settings: a named preset (sized by the experiment scale) with
/// optional overrides, or a fully explicit stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<StreamKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tasks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hard_classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_budget: Option<usize>,
}

impl StreamSection {
    pub fn resolve(&self, scale: usize) -> Result<StreamConfig> {
        let mut s = match &self.preset {
            Some(name) => StreamConfig::preset(name, scale)?,
            None => {
                let need = |v: Option<usize>, f: &str| {
                    v.ok_or_else(|| Error::config(format!("stream.{f} is required without a preset")))
                };
                StreamConfig {
                    kind: self
                        .kind
                        .ok_or_else(|| Error::config("stream.kind is required without a preset"))?,
                    tasks: need(self.tasks, "tasks")?,
                    batch_size: need(self.batch_size, "batch_size")?,
                    epochs: need(self.epochs, "epochs")?,
                    samples: 0,
                    per_class: 0,
                    hard_classes: 5,
                    step_budget: None,
                }
            }
        };
        if let Some(k) = self.kind {
            s.kind = k;
        }
        let overrides = [
            (self.tasks, &mut s.tasks),
            (self.batch_size, &mut s.batch_size),
            (self.epochs, &mut s.epochs),
            (self.samples, &mut s.samples),
            (self.per_class, &mut s.per_class),
            (self.hard_classes, &mut s.hard_classes),
        ];
        for (v, slot) in overrides {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if self.step_budget.is_some() {
            s.step_budget = self.step_budget;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockSection {
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "default_cycle")]
    pub cycle: usize,
    pub epochs: usize,
    pub task_epochs: usize,
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
    #[serde(default = "default_perf_threshold")]
    pub perf_threshold: f64,
}

fn default_gammas() -> Vec<f64> {
    ShockSchedule::default().gammas
}
fn default_cycle() -> usize {
    ShockSchedule::default().cycle
}
fn default_eval_size() -> usize {
    512
}
fn default_perf_threshold() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReturnLogSource {
    pub label: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlSection {
    pub logs: Vec<ReturnLogSource>,
    /// Fraction of the last cycle averaged by the Plasticity Score.
    #[serde(default = "default_final_fraction")]
    pub final_fraction: f64,
    #[serde(default)]
    pub window: WindowRule,
    #[serde(default = "default_gap_from")]
    pub gap_from: u32,
    #[serde(default = "default_gap_to")]
    pub gap_to: u32,
}

fn default_final_fraction() -> f64 {
    0.15
}
fn default_gap_from() -> u32 {
    1
}
fn default_gap_to() -> u32 {
    3
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Divides the per-task data sizes of stream presets.
    #[serde(default = "default_scale")]
    pub scale: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub accuracy_matrix: bool,
    #[serde(default)]
    pub activations: ActivationSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<StreamSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay: Option<ReplayConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shock: Option<ShockSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rl: Option<RlSection>,
}

fn default_scale() -> usize {
    1
}
fn default_hidden() -> Vec<usize> {
    vec![100, 100]
}

/// Default learning rate when a config names no optimizer.
pub const DEFAULT_LR: f64 = 1e-3;

/// The work of one cell, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cell", rename_all = "snake_case")]
pub enum CellSpec {
    Continual(ContinualConfig),
    Shock {
        stress: StressConfig,
        perf_threshold: f64,
    },
    Properties {
        activation: ActivationSpec,
    },
    ReturnLog {
        path: PathBuf,
        final_fraction: f64,
        window: WindowRule,
        gap_from: u32,
        gap_to: u32,
    },
}

/// One independent, deterministic unit of work.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub label: String,
    pub seed: u64,
    pub spec: CellSpec,
    /// Hash of the resolved cell settings, independent of the seed.
    pub config_hash: String,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, source: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| toml_error(text, source, "", &e))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            toml_error(text, source, &path, e.inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        // Relative data and log paths are taken relative to the config file.
        if let Some(dir) = path.parent() {
            cfg.rebase_paths(dir);
        }
        Ok(cfg)
    }

    fn rebase_paths(&mut self, dir: &Path) {
        if let Some(DataSource::File { path, .. }) = &mut self.data {
            if path.is_relative() {
                *path = dir.join(&*path);
            }
        }
        if let Some(rl) = &mut self.rl {
            for log in &mut rl.logs {
                if log.path.is_relative() {
                    log.path = dir.join(&log.path);
                }
            }
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("config serialization failed: {e}")))
    }

    /// Semantic checks, each reported with the offending field path.
    pub fn validate(&self) -> Result<()> {
        let at = |path: &str, e: Error| match e {
            Error::Config(m) => Error::config(format!("{path}: {m}")),
            other => other,
        };
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config(
                "name: must be non-empty and free of path separators",
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds: at least one seed is required"));
        }
        if self.scale == 0 {
            return Err(Error::config("scale: must be >= 1"));
        }
        for (i, s) in self.activations.specs.iter().enumerate() {
            s.validate()
                .map_err(|e| at(&format!("activations.specs[{i}]"), e))?;
        }
        if !self.activations.tuned.is_empty() && self.activations.benchmark.is_none() {
            return Err(Error::config(
                "activations.benchmark: required when `tuned` is set",
            ));
        }
        let list = self.activation_list().map_err(|e| at("activations", e))?;
        let mut seen = std::collections::BTreeSet::new();
        if let Some((label, ..)) = list.iter().find(|(l, ..)| !seen.insert(l.as_str())) {
            return Err(Error::config(format!("activations: `{label}` is listed twice")));
        }
        if let Some(o) = &self.optimizer {
            o.validate().map_err(|e| at("optimizer", e))?;
        }
        if let Some(d) = &self.data {
            d.validate().map_err(|e| at("data", e))?;
        }
        match self.kind {
            ExperimentKind::GoldilocksSweep
            | ExperimentKind::ContinualBenchmark
            | ExperimentKind::ShockStudy => {
                if self.data.is_none() {
                    return Err(Error::config("data: required for training experiments"));
                }
                let stream = self
                    .stream
                    .as_ref()
                    .ok_or_else(|| Error::config("stream: required for training experiments"))?;
                stream.resolve(self.scale).map_err(|e| at("stream", e))?;
                if self.hidden.is_empty() || self.hidden.contains(&0) {
                    return Err(Error::config("hidden: widths must be non-empty and >= 1"));
                }
                if self.kind == ExperimentKind::ShockStudy {
                    let shock = self
                        .shock
                        .as_ref()
                        .ok_or_else(|| Error::config("shock: required for shock studies"))?;
                    if !(shock.perf_threshold > 0.0 && shock.perf_threshold <= 1.0) {
                        return Err(Error::config("shock.perf_threshold: must lie in (0, 1]"));
                    }
                }
            }
            ExperimentKind::RlMetrics => {
                let rl = self
                    .rl
                    .as_ref()
                    .ok_or_else(|| Error::config("rl: required for rl_metrics experiments"))?;
                if !(rl.final_fraction > 0.0 && rl.final_fraction <= 1.0) {
                    return Err(Error::config("rl.final_fraction: must lie in (0, 1]"));
                }
                if rl.gap_from >= rl.gap_to || rl.gap_from == 0 {
                    return Err(Error::config(
                        "rl.gap_from: cycles are 1-based and gap_from < gap_to",
                    ));
                }
            }
            ExperimentKind::PropertyGrid => {}
        }
        // Resolving every cell surfaces any remaining inconsistency.
        self.cells()?;
        Ok(())
    }

    /// Labelled activations with their learning-rate override, if tuned.
    pub fn activation_list(&self) -> Result<Vec<(String, ActivationSpec, Option<f64>)>> {
        let set = &self.activations;
        let mut out = Vec::new();
        if set.canonical {
            for (name, spec) in canonical_specs() {
                out.push((name.to_string(), spec, None));
            }
        }
        for &kind in &set.sweep {
            for spec in sweep_grid(kind) {
                out.push((spec.label(), spec, None));
            }
        }
        for spec in &set.specs {
            out.push((spec.label(), spec.clone(), None));
        }
        if let Some(bench) = &set.benchmark {
            for name in &set.tuned {
                let (spec, lr) = if bench == "class_incremental" {
                    class_incremental_best(name)?
                } else {
                    benchmark_best(bench, name)?
                };
                out.push((format!("{name}:{}", spec.label()), spec, Some(lr)));
            }
        }
        Ok(out)
    }

    /// The cartesian product of activations × seeds (one cell per return
    /// log for RL experiments, one per activation for property grids).
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let mut specs: Vec<(String, u64, CellSpec)> = Vec::new();
        match self.kind {
            ExperimentKind::RlMetrics => {
                let rl = self.rl.as_ref().ok_or_else(|| Error::config("rl: missing"))?;
                for log in &rl.logs {
                    specs.push((
                        log.label.clone(),
                        self.seeds[0],
                        CellSpec::ReturnLog {
                            path: log.path.clone(),
                            final_fraction: rl.final_fraction,
                            window: rl.window,
                            gap_from: rl.gap_from,
                            gap_to: rl.gap_to,
                        },
                    ));
                }
            }
            ExperimentKind::PropertyGrid => {
                for (label, activation, _) in self.activation_list()? {
                    specs.push((label, self.seeds[0], CellSpec::Properties { activation }));
                }
            }
            kind => {
                let data = self.data.clone().ok_or_else(|| Error::config("data: missing"))?;
                let stream = self
                    .stream
                    .as_ref()
                    .ok_or_else(|| Error::config("stream: missing"))?
                    .resolve(self.scale)?;
                for (label, activation, lr) in self.activation_list()? {
                    let optimizer = optimizer_with_lr(self.optimizer, lr);
                    let spec = if kind == ExperimentKind::ShockStudy {
                        let shock = self
                            .shock
                            .as_ref()
                            .ok_or_else(|| Error::config("shock: missing"))?;
                        let stress = StressConfig {
                            activation,
                            hidden: self.hidden.clone(),
                            data: data.clone(),
                            stream: stream.clone(),
                            schedule: ShockSchedule {
                                gammas: shock.gammas.clone(),
                                cycle: shock.cycle,
                            },
                            epochs: shock.epochs,
                            task_epochs: shock.task_epochs,
                            optimizer,
                            eval_size: shock.eval_size,
                        };
                        stress.validate()?;
                        CellSpec::Shock {
                            stress,
                            perf_threshold: shock.perf_threshold,
                        }
                    } else {
                        let diagnostics = match kind {
                            ExperimentKind::GoldilocksSweep => Some(self.diagnostics.unwrap_or_default()),
                            _ => self.diagnostics,
                        };
                        let c = ContinualConfig {
                            activation,
                            hidden: self.hidden.clone(),
                            data: data.clone(),
                            stream: stream.clone(),
                            optimizer,
                            replay: self.replay,
                            accuracy_matrix: self.accuracy_matrix,
                            diagnostics,
                        };
                        c.validate()?;
                        CellSpec::Continual(c)
                    };
                    for &seed in &self.seeds {
                        specs.push((label.clone(), seed, spec.clone()));
                    }
                }
            }
        }
        specs
            .into_iter()
            .enumerate()
            .map(|(index, (label, seed, spec))| {
                Ok(Cell {
                    index,
                    config_hash: config_hash(&spec)?,
                    label,
                    seed,
                    spec,
                })
            })
            .collect()
    }
}

fn optimizer_with_lr(base: Option<OptimizerKind>, lr: Option<f64>) -> OptimizerKind {
    match (base, lr) {
        (Some(OptimizerKind::Sgd { .. }), Some(lr)) => OptimizerKind::sgd(lr),
        (
            Some(OptimizerKind::Adam {
                beta1, beta2, eps, ..
            }),
            Some(lr),
        ) => OptimizerKind::Adam {
            lr,
            beta1,
            beta2,
            eps,
        },
        (Some(o), None) => o,
        (None, lr) => OptimizerKind::adam(lr.unwrap_or(DEFAULT_LR)),
    }
}

/// First 16 hex digits of the SHA-256 of the cell's canonical JSON form.
pub fn config_hash(spec: &CellSpec) -> Result<String> {
    let json = serde_json::to_vec(spec).map_err(|e| Error::config(format!("hashing cell: {e}")))?;
    let digest = Sha256::digest(&json);
    Ok(hex::encode(&digest[..8]))
}

fn toml_error(text: &str, source: &str, path: &str, e: &toml::de::Error) -> Error {
    let position = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = span.start - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("line {line}, column {col}")
        }
        None => "unknown position".into(),
    };
    let field = if path.is_empty() || path == "." {
        String::new()
    } else {
        format!("{path}: ")
    };
    Error::Parse {
        source_name: source.to_string(),
        position,
        message: format!("{field}{}", e.message().trim()),
    }
}
