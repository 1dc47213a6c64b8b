//! Pre-activation scaling shocks and the per-epoch saturation trace.

use std::io::Write;

use ndarray::Axis;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::activation::{derivative_magnitudes, ActivationSpec, Mode};
use crate::net::{
    argmax, train_step, ActivationRngs, ForwardTape, Network, NetworkSpec, Optimizer, OptimizerKind,
};
use crate::seed::{self, tag};
use crate::streams::{DataSource, StreamConfig, TaskStream};
use crate::{Error, Result};

pub const SATURATION_EPS: f64 = 1e-3;
pub const TRACE_SCHEMA: &str = "# plasticity-trace v1";

/// Cyclic shock schedule: every `cycle` epochs (never at epoch 0) one epoch
/// runs with the next factor of `gammas`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockSchedule {
    pub gammas: Vec<f64>,
    pub cycle: usize,
}

impl Default for ShockSchedule {
    fn default() -> Self {
        ShockSchedule {
            gammas: vec![1.5, 0.5, 0.25, 2.0],
            cycle: 10,
        }
    }
}

impl ShockSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() {
            return Err(Error::config("shock schedule needs at least one gamma"));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::config(format!("shock gamma must be positive (got {g})")));
        }
        if self.cycle < 2 {
            return Err(Error::config(format!(
                "shock cycle must be >= 2 (got {})",
                self.cycle
            )));
        }
        Ok(())
    }

    pub fn is_shock_epoch(&self, t: usize) -> bool {
        t > 0 && t.is_multiple_of(self.cycle)
    }

    /// Scaling factor applied during epoch `t`.
    pub fn gamma_at(&self, t: usize) -> f64 {
        if self.is_shock_epoch(t) {
            self.gammas[(t / self.cycle - 1) % self.gammas.len()]
        } else {
            1.0
        }
    }
}

/// Saturated fractions of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Saturation {
    pub per_layer: Vec<f64>,
    /// Unit-weighted mean over all hidden layers.
    pub network: f64,
}

/// Fraction of (sample, unit) pairs per hidden layer whose derivative
/// magnitude at the recorded (already scaled) pre-activation is below `eps`.
pub fn saturation_fraction(net: &Network, tape: &ForwardTape, eps: f64) -> Result<Saturation> {
    if tape.act_tapes.len() != net.num_hidden() {
        return Err(Error::config("tape does not match the network depth"));
    }
    let mut per_layer = Vec::with_capacity(tape.act_tapes.len());
    let (mut sat, mut total) = (0usize, 0usize);
    for (l, t) in tape.act_tapes.iter().enumerate() {
        let mags = derivative_magnitudes(&net.spec.activations[l], &net.acts[l], t)?;
        let s = mags.iter().filter(|&&d| d < eps).count();
        per_layer.push(if mags.is_empty() {
            0.0
        } else {
            s as f64 / mags.len() as f64
        });
        sat += s;
        total += mags.len();
    }
    Ok(Saturation {
        per_layer,
        network: if total == 0 {
            0.0
        } else {
            sat as f64 / total as f64
        },
    })
}

/// One epoch of a stress run, measured at the end of the epoch on the fixed
/// evaluation batch under that epoch's γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub gamma: f64,
    pub shock: bool,
    pub sf_network: f64,
    pub sf_layers: Vec<f64>,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationTrace {
    pub cycle: usize,
    pub records: Vec<EpochRecord>,
    /// Reason the run stopped early (e.g. divergence), if it did.
    pub aborted: Option<String>,
}

impl SaturationTrace {
    /// CSV with a schema comment line and columns
    /// `epoch,gamma,sf_network,sf_layer_0..,accuracy,shock_flag`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{TRACE_SCHEMA}")?;
        let layers = self.records.first().map_or(0, |r| r.sf_layers.len());
        let mut header = vec!["epoch".to_string(), "gamma".into(), "sf_network".into()];
        header.extend((0..layers).map(|l| format!("sf_layer_{l}")));
        header.extend(["accuracy".to_string(), "shock_flag".into()]);
        writeln!(w, "{}", header.join(","))?;
        for r in &self.records {
            let mut row = vec![r.epoch.to_string(), r.gamma.to_string(), r.sf_network.to_string()];
            row.extend(r.sf_layers.iter().map(f64::to_string));
            row.extend([r.accuracy.to_string(), u8::from(r.shock).to_string()]);
            writeln!(w, "{}", row.join(","))?;
        }
        if let Some(reason) = &self.aborted {
            writeln!(w, "# aborted: {}", reason.replace('\n', " "))?;
        }
        Ok(())
    }
}

/// A shock-study run: train on a task stream, shocking one epoch per cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressConfig {
    pub activation: ActivationSpec,
    pub hidden: Vec<usize>,
    pub data: DataSource,
    pub stream: StreamConfig,
    #[serde(default)]
    pub schedule: ShockSchedule,
    pub epochs: usize,
    /// Epochs spent on each task before the stream advances.
    pub task_epochs: usize,
    pub optimizer: OptimizerKind,
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
}

fn default_eval_size() -> usize {
    512
}

impl StressConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.activation.validate()?;
        self.data.validate()?;
        self.stream.validate()?;
        self.optimizer.validate()?;
        if self.epochs == 0 || self.task_epochs == 0 || self.eval_size == 0 {
            return Err(Error::config(
                "stress epochs, task_epochs and eval_size must be >= 1",
            ));
        }
        Ok(())
    }
}

/// Train under the shock schedule and record the saturation trace. A
/// non-finite forward or update ends the trace with an abort reason.
pub fn run_stress_experiment(cfg: &StressConfig, seed_value: u64) -> Result<SaturationTrace> {
    cfg.validate()?;
    let base = cfg.data.load(seed_value)?;
    let mut stream_cfg = cfg.stream.clone();
    stream_cfg.tasks = cfg.epochs.div_ceil(cfg.task_epochs);
    stream_cfg.epochs = cfg.task_epochs;
    let stream = TaskStream::new(stream_cfg, base, seed_value)?;
    let spec = NetworkSpec::mlp(
        stream.input_dim(),
        &cfg.hidden,
        stream.num_outputs(),
        cfg.activation.clone(),
    );
    let mut net = Network::init(&spec, seed_value)?;
    let mut opt = Optimizer::new(cfg.optimizer)?;
    let mut rngs = ActivationRngs::new(seed_value, net.num_hidden());

    let mut trace = SaturationTrace {
        cycle: cfg.schedule.cycle,
        records: Vec::with_capacity(cfg.epochs),
        aborted: None,
    };
    let mut task = stream.task(0)?;
    let eval_idx = {
        let n = task.data.len();
        let mut rng = seed::rng(seed_value, &[tag::PROBE]);
        index::sample(&mut rng, n, cfg.eval_size.min(n)).into_vec()
    };
    for epoch in 0..cfg.epochs {
        let t = epoch / cfg.task_epochs;
        if t != task.index {
            task = stream.task(t)?;
        }
        let gamma = cfg.schedule.gamma_at(epoch);
        let per_epoch = task.steps().div_ceil(cfg.task_epochs);
        let e = epoch % cfg.task_epochs;
        let steps = (e * per_epoch)..((e + 1) * per_epoch).min(task.steps());
        let mut failure = None;
        for step in steps {
            let (x, y) = task.batch(step);
            if let Err(err) = train_step(&mut net, &mut opt, x.view(), &y, gamma, &mut rngs) {
                failure = Some(err);
                break;
            }
        }
        let measured = failure.map_or_else(|| measure(&net, &task, &eval_idx, gamma), Err);
        match measured {
            Ok((sat, accuracy)) => trace.records.push(EpochRecord {
                epoch,
                gamma,
                shock: cfg.schedule.is_shock_epoch(epoch),
                sf_network: sat.network,
                sf_layers: sat.per_layer,
                accuracy,
            }),
            Err(err @ Error::NonFinite { .. }) => {
                trace.aborted = Some(format!("epoch {epoch}: {err}"));
                break;
            }
            Err(err) => return Err(err),
        }
    }
    Ok(trace)
}

fn measure(
    net: &Network,
    task: &crate::streams::Task,
    eval_idx: &[usize],
    gamma: f64,
) -> Result<(Saturation, f64)> {
    let idx: Vec<usize> = eval_idx
        .iter()
        .copied()
        .filter(|&i| i < task.data.len())
        .collect();
    let x = task.data.features.select(Axis(0), &idx);
    let (logits, tape) = net.forward(x.view(), gamma, Mode::Eval, None)?;
    let sat = saturation_fraction(net, &tape, SATURATION_EPS)?;
    let correct = logits
        .outer_iter()
        .zip(&idx)
        .filter(|(row, &i)| argmax(row.iter().copied()) == task.data.labels[i])
        .count();
    Ok((sat, correct as f64 / idx.len().max(1) as f64))
}
