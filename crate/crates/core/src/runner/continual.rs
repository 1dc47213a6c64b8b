//! One continual-learning run over a task stream, with online accuracy
//! logging and end-of-stream network diagnostics.

use ndarray::{concatenate, Axis};
use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::metrics::{effective_rank, mann_kendall_s, network_lambda_max, AccuracyMatrix, OnlineAccuracyLog};
use crate::net::{
    accuracy, dead_unit_fraction, per_sample_gradients, train_step, ActivationRngs, Network, NetworkSpec,
    Optimizer, OptimizerKind,
};
use crate::streams::{DataSource, Dataset, ReplayBuffer, StreamConfig, TaskStream};
use crate::stress::SATURATION_EPS;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub per_task_cap: usize,
    /// Replayed samples appended to every incoming batch.
    pub batch: usize,
}

/// End-of-stream diagnostics settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Samples of the last task used for dead units and curvature.
    pub probe_size: usize,
    /// Samples whose gradients form the effective-rank matrix.
    pub rank_samples: usize,
    pub rank_tau: f64,
    pub power_iters: usize,
    pub power_tol: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            probe_size: 256,
            rank_samples: 64,
            rank_tau: 0.99,
            power_iters: 50,
            power_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinualConfig {
    pub activation: ActivationSpec,
    pub hidden: Vec<usize>,
    pub data: DataSource,
    pub stream: StreamConfig,
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub replay: Option<ReplayConfig>,
    /// Evaluate every finished task after each task boundary.
    #[serde(default)]
    pub accuracy_matrix: bool,
    #[serde(default)]
    pub diagnostics: Option<DiagnosticsConfig>,
}

impl ContinualConfig {
    pub fn validate(&self) -> Result<()> {
        self.activation.validate()?;
        self.data.validate()?;
        self.stream.validate()?;
        self.optimizer.validate()?;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("hidden widths must be non-empty and >= 1"));
        }
        if let Some(r) = &self.replay {
            if r.capacity == 0 || r.per_task_cap == 0 {
                return Err(Error::config("replay capacity and per_task_cap must be >= 1"));
            }
        }
        if let Some(d) = &self.diagnostics {
            if d.probe_size == 0 || d.rank_samples == 0 || !(d.rank_tau > 0.0 && d.rank_tau <= 1.0) {
                return Err(Error::config(
                    "diagnostics sizes must be >= 1 and rank_tau in (0, 1]",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub dead_unit_fraction: f64,
    pub effective_rank: usize,
    pub lambda_max: f64,
}

#[derive(Debug, Clone)]
pub struct ContinualOutcome {
    pub tasks_completed: usize,
    pub online: OnlineAccuracyLog,
    /// Total average online accuracy over the completed tasks.
    pub taoa: f64,
    pub aoa: Vec<f64>,
    /// Trend statistic of the per-task online accuracies.
    pub aoa_trend: i64,
    pub accuracy_matrix: Option<AccuracyMatrix>,
    pub diagnostics: Option<Diagnostics>,
    pub aborted: Option<String>,
}

/// Train on the stream task by task. Online accuracy is the pre-update
/// prediction accuracy on each incoming batch (replayed samples excluded).
/// A non-finite value stops the stream; the completed tasks are reported.
pub fn run_continual(cfg: &ContinualConfig, seed_value: u64) -> Result<ContinualOutcome> {
    cfg.validate()?;
    let base = cfg.data.load(seed_value)?;
    let stream = TaskStream::new(cfg.stream.clone(), base, seed_value)?;
    let tasks = stream.available_tasks();
    if tasks < cfg.stream.tasks {
        log::warn!(
            "stream delivers {tasks} of {} tasks before its class budget runs out",
            cfg.stream.tasks
        );
    }
    if tasks == 0 {
        return Err(Error::StreamExhausted("stream delivers no tasks".into()));
    }
    let spec = NetworkSpec::mlp(
        stream.input_dim(),
        &cfg.hidden,
        stream.num_outputs(),
        cfg.activation.clone(),
    );
    let mut net = Network::init(&spec, seed_value)?;
    let mut opt = Optimizer::new(cfg.optimizer)?;
    let mut rngs = ActivationRngs::new(seed_value, net.num_hidden());
    let mut replay = cfg
        .replay
        .map(|r| ReplayBuffer::new(r.capacity, r.per_task_cap, seed_value))
        .transpose()?;

    let mut online = OnlineAccuracyLog::new();
    let mut matrix = cfg.accuracy_matrix.then(AccuracyMatrix::new);
    let mut aborted = None;
    let mut last_task = None;
    'tasks: for t in 0..tasks {
        let task = stream.task(t)?;
        let mut accs = Vec::with_capacity(task.steps());
        for step in 0..task.steps() {
            let (x, y) = task.batch(step);
            let outcome = match (&mut replay, cfg.replay) {
                (Some(buf), Some(rc)) => {
                    let acc = accuracy(&net, x.view(), &y);
                    let step_res = acc.and_then(|acc| {
                        let (rx, ry) = buf.sample(rc.batch.min(buf.len()))?;
                        let (bx, by) = if ry.is_empty() {
                            (x.clone(), y.clone())
                        } else {
                            let bx = concatenate(Axis(0), &[x.view(), rx.view()])
                                .map_err(|e| Error::config(format!("replay batch shape: {e}")))?;
                            (bx, y.iter().chain(&ry).copied().collect())
                        };
                        train_step(&mut net, &mut opt, bx.view(), &by, 1.0, &mut rngs)?;
                        buf.insert(x.view(), &y, t)?;
                        Ok(acc)
                    });
                    step_res
                }
                _ => train_step(&mut net, &mut opt, x.view(), &y, 1.0, &mut rngs).map(|s| s.accuracy),
            };
            match outcome {
                Ok(a) => accs.push(a),
                Err(err @ Error::NonFinite { .. }) => {
                    aborted = Some(format!("task {t}, step {step}: {err}"));
                    break 'tasks;
                }
                Err(err) => return Err(err),
            }
        }
        online.push_task(accs)?;
        if let Some(m) = matrix.as_mut() {
            let mut row = Vec::with_capacity(t + 1);
            for i in 0..=t {
                let d = if i == t {
                    task.data.clone()
                } else {
                    stream.task(i)?.data
                };
                row.push(accuracy(&net, d.view(), &d.labels)?);
            }
            m.push_row(row)?;
        }
        last_task = Some(task);
    }

    let completed = online.aoa_sequence()?.len();
    if completed == 0 {
        return Err(Error::NonFinite {
            location: aborted.unwrap_or_else(|| "first task".into()),
            value: f64::NAN,
        });
    }
    let aoa = online.aoa_sequence()?;
    let diagnostics = match (cfg.diagnostics, &last_task, &aborted) {
        (Some(d), Some(task), None) => Some(diagnose(&net, &task.data, &d, seed_value)?),
        _ => None,
    };
    Ok(ContinualOutcome {
        tasks_completed: completed,
        taoa: online.taoa(completed)?,
        aoa_trend: mann_kendall_s(&aoa),
        aoa,
        online,
        accuracy_matrix: matrix,
        diagnostics,
        aborted,
    })
}

fn diagnose(net: &Network, data: &Dataset, cfg: &DiagnosticsConfig, seed_value: u64) -> Result<Diagnostics> {
    let n = cfg.probe_size.min(data.len());
    let idx: Vec<usize> = (0..n).collect();
    let probe = data.select(&idx);
    let dead = dead_unit_fraction(net, &[probe.view()], SATURATION_EPS)?;
    let m = cfg.rank_samples.min(n);
    let layer = net.num_hidden().saturating_sub(1);
    let grads = per_sample_gradients(
        net,
        probe.features.slice(ndarray::s![..m, ..]),
        &probe.labels[..m],
        layer,
    )?;
    let rank = effective_rank(grads.view(), cfg.rank_tau)?;
    let power = network_lambda_max(
        net,
        probe.view(),
        &probe.labels,
        cfg.power_iters,
        cfg.power_tol,
        seed_value,
    )?;
    Ok(Diagnostics {
        dead_unit_fraction: dead,
        effective_rank: rank,
        lambda_max: power.lambda,
    })
}
