//! Running one cell and turning its outcome into metric rows.

use std::fs::File;
use std::io::BufReader;

use super::config::{Cell, CellSpec};
use super::continual::run_continual;
use crate::activation::ActivationSpec;
use crate::metrics::{
    gap_delta_between, gap_summary, mean, plasticity_score_with, recovery_stats, ReturnLog,
};
use crate::props::{
    dead_band_width, effective_negative_slope, property_grid, PropertyGrid, SlopeDistribution, DBW_EPS,
    DBW_GRID, DBW_RANGE,
};
use crate::stress::run_stress_experiment;
use crate::{Error, Result};

/// A metric produced by a cell. `suffix` extends the experiment id and
/// `seed` overrides the cell seed (return logs carry their own runs).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub suffix: Option<String>,
    pub seed: Option<u64>,
    pub metric: String,
    pub value: f64,
    pub units: &'static str,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellOutput {
    pub rows: Vec<MetricRow>,
    /// (file tag, CSV bytes).
    pub traces: Vec<(String, Vec<u8>)>,
}

impl CellOutput {
    fn push(&mut self, metric: &str, value: f64, units: &'static str) {
        self.rows.push(MetricRow {
            suffix: None,
            seed: None,
            metric: metric.to_string(),
            value,
            units,
        });
    }
}

pub(crate) fn cell_activation(spec: &CellSpec) -> Option<ActivationSpec> {
    match spec {
        CellSpec::Continual(c) => Some(c.activation.clone()),
        CellSpec::Shock { stress, .. } => Some(stress.activation.clone()),
        CellSpec::Properties { activation } => Some(activation.clone()),
        CellSpec::ReturnLog { .. } => None,
    }
}

pub fn execute_cell(cell: &Cell) -> Result<CellOutput> {
    let mut out = CellOutput::default();
    match &cell.spec {
        CellSpec::Continual(cfg) => {
            analytic(&mut out, &cfg.activation)?;
            let res = run_continual(cfg, cell.seed)?;
            out.push("taoa", res.taoa, "fraction");
            out.push(
                "final_aoa",
                *res.aoa.last().expect("at least one task"),
                "fraction",
            );
            out.push("aoa_trend", res.aoa_trend as f64, "mann_kendall_s");
            out.push("tasks_completed", res.tasks_completed as f64, "count");
            out.push("aborted", f64::from(u8::from(res.aborted.is_some())), "flag");
            if let Some(m) = &res.accuracy_matrix {
                let t = m.tasks();
                out.push("acc_t", m.acc_t(t)?, "fraction");
                if t >= 2 {
                    out.push("bwt_t", m.bwt_t(t)?, "fraction");
                }
            }
            if let Some(d) = res.diagnostics {
                out.push("dead_unit_fraction", d.dead_unit_fraction, "fraction");
                out.push("effective_rank", d.effective_rank as f64, "count");
                out.push("lambda_max", d.lambda_max, "curvature");
            }
            let mut csv = String::from("task,aoa\n");
            for (i, a) in res.aoa.iter().enumerate() {
                csv.push_str(&format!("{i},{a}\n"));
            }
            out.traces.push(("aoa".into(), csv.into_bytes()));
        }
        CellSpec::Shock {
            stress,
            perf_threshold,
        } => {
            analytic(&mut out, &stress.activation)?;
            let trace = run_stress_experiment(stress, cell.seed)?;
            let events = recovery_stats(&trace, *perf_threshold)?;
            let n = events.len();
            out.push("shock_events", n as f64, "count");
            out.push("aborted", f64::from(u8::from(trace.aborted.is_some())), "flag");
            if let Some(last) = trace.records.last() {
                out.push("final_accuracy", last.accuracy, "fraction");
                out.push("final_sf", last.sf_network, "fraction");
            }
            if n > 0 {
                let col = |f: &dyn Fn(&crate::metrics::RecoveryStats) -> f64| {
                    events.iter().map(f).collect::<Vec<_>>()
                };
                out.push("ausc_mean", mean(&col(&|e| e.ausc)), "sf_epochs");
                out.push("peak_sf_mean", mean(&col(&|e| e.peak_sf)), "fraction");
                out.push("baseline_sf_mean", mean(&col(&|e| e.baseline_sf)), "fraction");
                let sf_fail = events.iter().filter(|e| !e.sf_recovered).count();
                out.push("sf_nonrecovery_rate", sf_fail as f64 / n as f64, "fraction");
                let perf_fail = events.iter().filter(|e| !e.perf_recovered).count();
                out.push("perf_nonrecovery_rate", perf_fail as f64 / n as f64, "fraction");
                let halves: Vec<f64> = events
                    .iter()
                    .filter_map(|e| e.sf_half_recovery.map(|v| v as f64))
                    .collect();
                if !halves.is_empty() {
                    out.push("sf_recovery_time_mean", mean(&halves), "epochs");
                }
                let taus: Vec<f64> = events.iter().filter_map(|e| e.tau.map(|v| v as f64)).collect();
                if !taus.is_empty() {
                    out.push("tau95_mean", mean(&taus), "epochs");
                }
            }
            let mut buf = Vec::new();
            trace
                .write_csv(&mut buf)
                .map_err(|e| Error::config(format!("trace serialization: {e}")))?;
            out.traces.push(("trace".into(), buf));
        }
        CellSpec::Properties { activation } => {
            analytic(&mut out, activation)?;
            out.push(
                "s_bar_uniform",
                effective_negative_slope(activation, None, SlopeDistribution::uniform_default())?,
                "slope",
            );
            let grid = property_grid(activation, None)?;
            for (name, flag) in PropertyGrid::COLUMNS.iter().zip(grid.flags()) {
                out.push(&format!("prop_{name}"), f64::from(u8::from(flag)), "flag");
            }
        }
        CellSpec::ReturnLog {
            path,
            final_fraction,
            window,
            gap_from,
            gap_to,
        } => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let log = ReturnLog::from_csv(BufReader::new(file), &path.display().to_string())?;
            let envs: Vec<String> = log.environments().into_iter().map(String::from).collect();
            let runs: Vec<String> = log.runs().into_iter().map(String::from).collect();
            for (i, run) in runs.iter().enumerate() {
                let mut row = |metric: String, value: f64, units: &'static str| {
                    out.rows.push(MetricRow {
                        suffix: Some(run.clone()),
                        seed: Some(i as u64),
                        metric,
                        value,
                        units,
                    })
                };
                match plasticity_score_with(&log, run, *final_fraction, *window) {
                    Ok(v) => row("plasticity_score".into(), v, "return"),
                    Err(e) => log::warn!("run {run}: plasticity score unavailable: {e}"),
                }
                let mut deltas = Vec::new();
                for env in &envs {
                    match gap_delta_between(&log, run, env, *gap_from, *gap_to) {
                        Ok(d) => {
                            row(format!("gap_delta:{env}"), d, "return");
                            deltas.push(d);
                        }
                        Err(e) => log::warn!("run {run}, {env}: generalization gap unavailable: {e}"),
                    }
                }
                if !deltas.is_empty() {
                    let (median, mean) = gap_summary(&deltas)?;
                    row("gap_median".into(), median, "return");
                    row("gap_mean".into(), mean, "return");
                }
            }
        }
    }
    Ok(out)
}

/// Seed-independent analytic descriptors, repeated on every cell so each
/// result row set is self-contained.
fn analytic(out: &mut CellOutput, spec: &ActivationSpec) -> Result<()> {
    out.push(
        "dbw",
        dead_band_width(spec, None, DBW_RANGE, DBW_EPS, DBW_GRID)?,
        "fraction",
    );
    out.push(
        "s_bar",
        effective_negative_slope(spec, None, SlopeDistribution::TruncatedStandardNormalNegative)?,
        "slope",
    );
    Ok(())
}
