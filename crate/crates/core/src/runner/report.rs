//! Aggregate reports over a finished result directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::groups::{floor_class, sidedness};
use super::{read_results, CellStatus, Manifest, ResultRow, RESULTS};
use crate::activation::ActivationSpec;
use crate::metrics::{bootstrap_ci, mean, pearson_r, std_error};
use crate::{Error, Result};

pub const REPORT_DIR: &str = "report";
pub const CI_LEVEL: f64 = 0.95;
pub const CI_RESAMPLES: usize = 2000;
const CI_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    /// Mean and bootstrap CI of every metric across seeds.
    Summary,
    /// The same statistics pooled by derivative-floor class and sidedness.
    FloorClasses,
    /// Pearson correlation of dead-band width with shock metrics.
    Correlation,
}

impl std::str::FromStr for ReportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "summary" => Ok(ReportKind::Summary),
            "floor-classes" | "floor_classes" => Ok(ReportKind::FloorClasses),
            "correlation" => Ok(ReportKind::Correlation),
            other => Err(Error::config(format!(
                "unknown report kind `{other}`; known: summary, floor-classes, correlation"
            ))),
        }
    }
}

/// One Pearson correlation across activations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correlation {
    pub x: String,
    pub y: String,
    pub n: usize,
    pub r: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportOutcome {
    pub files: Vec<PathBuf>,
    /// Failed cells and metrics that were expected but absent.
    pub missing: Vec<String>,
    pub correlations: Vec<Correlation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct StatRow {
    n: usize,
    mean: f64,
    std_error: f64,
    ci_lo: f64,
    ci_hi: f64,
    half_width: f64,
    /// A single sample: the interval degenerates to the point estimate.
    single_seed: u8,
}

fn stats(values: &[f64]) -> Result<StatRow> {
    let m = mean(values);
    let (lo, hi) = if values.len() < 2 {
        (m, m)
    } else {
        let ci = bootstrap_ci(values, CI_LEVEL, CI_RESAMPLES, CI_SEED)?;
        (ci.lo, ci.hi)
    };
    Ok(StatRow {
        n: values.len(),
        mean: m,
        std_error: if values.len() < 2 { 0.0 } else { std_error(values) },
        ci_lo: lo,
        ci_hi: hi,
        half_width: (m - lo).max(hi - m),
        single_seed: u8::from(values.len() < 2),
    })
}

/// Build report `kind` from `dir`, writing CSVs under `dir/report/`.
pub fn report(dir: &Path, kind: ReportKind) -> Result<ReportOutcome> {
    let manifest = Manifest::load(dir)?;
    let rows = read_results(&dir.join(RESULTS))?;
    let mut out = ReportOutcome::default();
    for c in manifest.cells.iter().filter(|c| c.status == CellStatus::Failed) {
        out.missing.push(format!(
            "{} seed {}: cell failed: {}",
            c.experiment,
            c.seed,
            c.error.as_deref().unwrap_or("unknown error")
        ));
    }
    let report_dir = dir.join(REPORT_DIR);
    fs::create_dir_all(&report_dir).map_err(|e| Error::io(&report_dir, e))?;
    match kind {
        ReportKind::Summary => summary(&rows, &report_dir, &mut out)?,
        ReportKind::FloorClasses => floor_classes(&manifest, &rows, &report_dir, &mut out)?,
        ReportKind::Correlation => correlation(&rows, &report_dir, &mut out)?,
    }
    Ok(out)
}

/// `experiment -> metric -> (units, values)` in stable order.
type Grouped = BTreeMap<String, BTreeMap<String, (String, Vec<f64>)>>;

fn group(rows: &[ResultRow]) -> Grouped {
    let mut g: Grouped = BTreeMap::new();
    for r in rows {
        g.entry(r.experiment.clone())
            .or_default()
            .entry(r.metric.clone())
            .or_insert_with(|| (r.units.clone(), Vec::new()))
            .1
            .push(r.value);
    }
    g
}

fn list_missing_metrics(g: &Grouped, out: &mut ReportOutcome) {
    let all: BTreeSet<&String> = g.values().flat_map(|m| m.keys()).collect();
    for (exp, metrics) in g {
        for m in &all {
            if !metrics.contains_key(*m) {
                out.missing.push(format!("{exp}: missing metric {m}"));
            }
        }
    }
}

fn summary(rows: &[ResultRow], dir: &Path, out: &mut ReportOutcome) -> Result<()> {
    let g = group(rows);
    list_missing_metrics(&g, out);
    let path = dir.join("summary.csv");
    let mut w = writer(&path)?;
    write(
        &mut w,
        &path,
        [
            "experiment",
            "metric",
            "units",
            "n",
            "mean",
            "std_error",
            "ci_lo",
            "ci_hi",
            "half_width",
            "single_seed",
        ],
    )?;
    for (exp, metrics) in &g {
        for (metric, (units, values)) in metrics {
            let s = stats(values)?;
            write(
                &mut w,
                &path,
                [
                    exp.clone(),
                    metric.clone(),
                    units.clone(),
                    s.n.to_string(),
                    s.mean.to_string(),
                    s.std_error.to_string(),
                    s.ci_lo.to_string(),
                    s.ci_hi.to_string(),
                    s.half_width.to_string(),
                    s.single_seed.to_string(),
                ],
            )?;
        }
    }
    finish(w, &path, out)
}

/// (units, values, member labels) of one (grouping, group, metric).
type Pool = (String, Vec<f64>, BTreeSet<String>);

fn floor_classes(manifest: &Manifest, rows: &[ResultRow], dir: &Path, out: &mut ReportOutcome) -> Result<()> {
    let by_exp: BTreeMap<&str, &ActivationSpec> = manifest
        .cells
        .iter()
        .filter_map(|c| c.activation.as_ref().map(|a| (c.experiment.as_str(), a)))
        .collect();
    let mut pooled: BTreeMap<(&str, &str, String), Pool> = BTreeMap::new();
    let mut unclassified = BTreeSet::new();
    for r in rows {
        let Some(spec) = by_exp.get(r.experiment.as_str()) else {
            unclassified.insert(r.experiment.clone());
            continue;
        };
        let label = r
            .experiment
            .rsplit('/')
            .next()
            .unwrap_or(&r.experiment)
            .to_string();
        for (grouping, name) in [
            ("floor", floor_class(spec).name()),
            ("sidedness", sidedness(spec).name()),
        ] {
            let e = pooled
                .entry((grouping, name, r.metric.clone()))
                .or_insert_with(|| (r.units.clone(), Vec::new(), Default::default()));
            e.1.push(r.value);
            e.2.insert(label.clone());
        }
    }
    for exp in unclassified {
        out.missing
            .push(format!("{exp}: no activation recorded, excluded from grouping"));
    }
    let path = dir.join("floor_classes.csv");
    let mut w = writer(&path)?;
    write(
        &mut w,
        &path,
        [
            "grouping",
            "group",
            "metric",
            "units",
            "n",
            "mean",
            "std_error",
            "ci_lo",
            "ci_hi",
            "half_width",
            "single_seed",
            "members",
        ],
    )?;
    for ((grouping, name, metric), (units, values, members)) in &pooled {
        let s = stats(values)?;
        let members = members.iter().cloned().collect::<Vec<_>>().join(";");
        write(
            &mut w,
            &path,
            [
                grouping.to_string(),
                name.to_string(),
                metric.clone(),
                units.clone(),
                s.n.to_string(),
                s.mean.to_string(),
                s.std_error.to_string(),
                s.ci_lo.to_string(),
                s.ci_hi.to_string(),
                s.half_width.to_string(),
                s.single_seed.to_string(),
                members,
            ],
        )?;
    }
    finish(w, &path, out)
}

/// Shock metrics correlated with dead-band width; the first is primary.
pub const CORRELATION_TARGETS: [&str; 2] = ["ausc_mean", "sf_nonrecovery_rate"];

fn correlation(rows: &[ResultRow], dir: &Path, out: &mut ReportOutcome) -> Result<()> {
    let g = group(rows);
    let per_exp = |exp: &BTreeMap<String, (String, Vec<f64>)>, m: &str| exp.get(m).map(|(_, v)| mean(v));
    let points_path = dir.join("correlation_points.csv");
    let mut pw = writer(&points_path)?;
    let mut header = vec!["experiment".to_string(), "dbw".into()];
    header.extend(CORRELATION_TARGETS.iter().map(|s| s.to_string()));
    write(&mut pw, &points_path, header)?;
    let mut series: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); CORRELATION_TARGETS.len()];
    for (exp, metrics) in &g {
        let Some(dbw) = per_exp(metrics, "dbw") else {
            out.missing.push(format!("{exp}: missing metric dbw"));
            continue;
        };
        let mut rec = vec![exp.clone(), dbw.to_string()];
        for (k, target) in CORRELATION_TARGETS.iter().enumerate() {
            match per_exp(metrics, target) {
                Some(y) => {
                    series[k].0.push(dbw);
                    series[k].1.push(y);
                    rec.push(y.to_string());
                }
                None => {
                    out.missing.push(format!("{exp}: missing metric {target}"));
                    rec.push(String::new());
                }
            }
        }
        write(&mut pw, &points_path, rec)?;
    }
    finish(pw, &points_path, out)?;

    let path = dir.join("correlation.csv");
    let mut w = writer(&path)?;
    write(&mut w, &path, ["x", "y", "n", "r", "p"])?;
    for (target, (xs, ys)) in CORRELATION_TARGETS.iter().zip(&series) {
        match pearson_r(xs, ys) {
            Ok((r, p)) => {
                write(
                    &mut w,
                    &path,
                    [
                        "dbw".to_string(),
                        target.to_string(),
                        xs.len().to_string(),
                        r.to_string(),
                        p.to_string(),
                    ],
                )?;
                out.correlations.push(Correlation {
                    x: "dbw".into(),
                    y: target.to_string(),
                    n: xs.len(),
                    r,
                    p,
                });
            }
            Err(e) => out.missing.push(format!("correlation dbw~{target}: {e}")),
        }
    }
    finish(w, &path, out)
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn write<I, T>(w: &mut csv::Writer<fs::File>, path: &Path, record: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(record)
        .map_err(|e| Error::config(format!("writing {}: {e}", path.display())))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path, out: &mut ReportOutcome) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))?;
    out.files.push(path.to_path_buf());
    Ok(())
}
