//! Continual-learning accuracies, shock-recovery statistics, curvature
//! diagnostics, return-log scores and the small statistics toolkit used by
//! the reports.

mod curvature;
mod returns;

pub use curvature::{effective_rank, lambda_max, network_hvp, network_lambda_max, PowerIteration};
pub use returns::{
    gap_delta, gap_delta_between, gap_summary, generalization_gap, plasticity_score, plasticity_score_with,
    Phase, ReturnLog, ReturnRecord, WindowRule,
};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::seed::{self, tag};
use crate::stress::SaturationTrace;
use crate::{Error, Result};

/// Lower-triangular accuracy matrix: row `t` (1-based) holds the accuracy on
/// tasks `1..=t` measured after finishing task `t`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append the row for the next finished task.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        let expected = self.rows.len() + 1;
        if row.len() != expected {
            return Err(Error::config(format!(
                "accuracy row {expected} needs {expected} entries, got {}",
                row.len()
            )));
        }
        check_unit(&row, "accuracy")?;
        self.rows.push(row);
        Ok(())
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::new();
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn tasks(&self) -> usize {
        self.rows.len()
    }

    /// `A[t, i]`, both 1-based with `i <= t`.
    pub fn get(&self, t: usize, i: usize) -> Option<f64> {
        self.rows.get(t.checked_sub(1)?)?.get(i.checked_sub(1)?).copied()
    }

    fn row(&self, t: usize) -> Result<&[f64]> {
        if t == 0 || t > self.rows.len() {
            return Err(Error::OutOfRange(format!(
                "task {t} of an accuracy matrix with {} rows",
                self.rows.len()
            )));
        }
        Ok(&self.rows[t - 1])
    }

    /// Average accuracy over tasks `1..=t` after finishing task `t`.
    pub fn acc_t(&self, t: usize) -> Result<f64> {
        Ok(mean(self.row(t)?))
    }

    /// Backward transfer `(1/(t−1)) Σ_{i<t} (A[t,i] − A[i,i])`.
    pub fn bwt_t(&self, t: usize) -> Result<f64> {
        if t < 2 {
            return Err(Error::OutOfRange(format!(
                "backward transfer needs t >= 2 (got {t})"
            )));
        }
        let last = self.row(t)?;
        let sum: f64 = (1..t).map(|i| last[i - 1] - self.rows[i - 1][i - 1]).sum();
        Ok(sum / (t - 1) as f64)
    }
}

/// Per-batch online accuracies, one list per task (0-based task index).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OnlineAccuracyLog {
    pub tasks: Vec<Vec<f64>>,
}

impl OnlineAccuracyLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_task(&mut self, batches: Vec<f64>) -> Result<()> {
        check_unit(&batches, "online accuracy")?;
        self.tasks.push(batches);
        Ok(())
    }

    /// Mean online accuracy of task `i`.
    pub fn aoa(&self, i: usize) -> Result<f64> {
        let task = self
            .tasks
            .get(i)
            .ok_or_else(|| Error::OutOfRange(format!("task {i} of {}", self.tasks.len())))?;
        if task.is_empty() {
            return Err(Error::Empty(format!("online accuracy log of task {i}")));
        }
        Ok(mean(task))
    }

    /// Batch-weighted mean online accuracy over the first `through` tasks.
    pub fn taoa(&self, through: usize) -> Result<f64> {
        if through == 0 || through > self.tasks.len() {
            return Err(Error::OutOfRange(format!(
                "taoa through {through} tasks of {}",
                self.tasks.len()
            )));
        }
        let (mut sum, mut n) = (0.0, 0usize);
        for (i, t) in self.tasks[..through].iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Empty(format!("online accuracy log of task {i}")));
            }
            sum += t.iter().sum::<f64>();
            n += t.len();
        }
        Ok(sum / n as f64)
    }

    pub fn aoa_sequence(&self) -> Result<Vec<f64>> {
        (0..self.tasks.len()).map(|i| self.aoa(i)).collect()
    }
}

/// Mann-Kendall trend statistic `S = Σ_{i<j} sign(x_j − x_i)`; negative
/// values indicate a declining sequence.
pub fn mann_kendall_s(values: &[f64]) -> i64 {
    let mut s = 0i64;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            s += match values[j].partial_cmp(&values[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    s
}

/// Statistics of one shock event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryStats {
    /// Epoch of the shock.
    pub epoch: usize,
    pub gamma: f64,
    /// SF at the epoch before the shock.
    pub baseline_sf: f64,
    /// SF during the shock epoch.
    pub peak_sf: f64,
    /// SF at the first epoch after the shock (γ reverted).
    pub post_shock_sf: Option<f64>,
    /// Discrete baseline-subtracted area over the window (shock epoch included).
    pub ausc: f64,
    /// Epochs after the shock until SF has come half-way back to baseline.
    pub sf_half_recovery: Option<usize>,
    pub sf_recovered: bool,
    /// Epochs after the shock until accuracy regains the threshold fraction
    /// of its pre-shock value.
    pub tau: Option<usize>,
    pub perf_recovered: bool,
    /// Epochs in the window, the shock epoch included.
    pub window: usize,
}

/// Recovery statistics for every shock epoch of a per-epoch SF/accuracy
/// series. The window of a shock at `s` spans epochs `s..s+cycle`, clipped
/// to the series; shocks without a baseline epoch or any post-shock epoch
/// are skipped with a warning.
pub fn recovery_events(
    sf: &[f64],
    accuracy: &[f64],
    gammas: &[f64],
    shock_epochs: &[usize],
    cycle: usize,
    perf_threshold: f64,
) -> Result<Vec<RecoveryStats>> {
    if sf.len() != accuracy.len() || sf.len() != gammas.len() {
        return Err(Error::config("SF, accuracy and gamma series differ in length"));
    }
    let mut out = Vec::new();
    for &s in shock_epochs {
        if s == 0 || s >= sf.len() {
            log::warn!("shock at epoch {s} has no baseline or lies outside the trace; skipped");
            continue;
        }
        let end = (s + cycle).min(sf.len());
        if end - s < 2 {
            log::warn!("shock at epoch {s} has an empty recovery window; skipped");
            continue;
        }
        let baseline = sf[s - 1];
        let peak = sf[s];
        let target = baseline + (peak - baseline) / 2.0;
        let ausc: f64 = sf[s..end].iter().map(|&v| (v - baseline).max(0.0)).sum();
        let half = (s + 1..end).find(|&e| sf[e] <= target).map(|e| e - s);
        let acc_target = perf_threshold * accuracy[s - 1];
        let tau = (s + 1..end).find(|&e| accuracy[e] >= acc_target).map(|e| e - s);
        out.push(RecoveryStats {
            epoch: s,
            gamma: gammas[s],
            baseline_sf: baseline,
            peak_sf: peak,
            post_shock_sf: sf.get(s + 1).copied(),
            ausc,
            sf_half_recovery: half,
            sf_recovered: half.is_some(),
            tau,
            perf_recovered: tau.is_some(),
            window: end - s,
        });
    }
    Ok(out)
}

/// [`recovery_events`] over a saturation trace, using its network-wide SF.
pub fn recovery_stats(trace: &SaturationTrace, perf_threshold: f64) -> Result<Vec<RecoveryStats>> {
    let sf: Vec<f64> = trace.records.iter().map(|r| r.sf_network).collect();
    let acc: Vec<f64> = trace.records.iter().map(|r| r.accuracy).collect();
    let gammas: Vec<f64> = trace.records.iter().map(|r| r.gamma).collect();
    let shocks: Vec<usize> = trace
        .records
        .iter()
        .filter(|r| r.shock)
        .map(|r| r.epoch)
        .collect();
    recovery_events(&sf, &acc, &gammas, &shocks, trace.cycle, perf_threshold)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median; an even count averages the two middle values.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("median of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Sample standard deviation (n − 1 denominator).
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Standard error of the mean.
pub fn std_error(values: &[f64]) -> f64 {
    std_dev(values) / (values.len() as f64).sqrt()
}

/// Pearson product-moment correlation with its two-sided p-value from the
/// t distribution with n − 2 degrees of freedom.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::config(format!(
            "pearson_r: {} x values, {} y values",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::OutOfRange(format!("pearson_r needs n >= 3 (got {n})")));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::config("pearson_r: zero variance"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let one_minus = 1.0 - r * r;
    let p = if one_minus <= 0.0 {
        0.0
    } else {
        let t2 = r * r * df / one_minus;
        beta_reg(df / 2.0, 0.5, df / (df + t2))
    };
    Ok((r, p))
}

/// Percentile bootstrap interval of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl BootstrapCi {
    /// Conservative symmetric margin: the larger one-sided distance.
    pub fn half_width(&self) -> f64 {
        half_width(self.mean, self.lo, self.hi)
    }
}

pub fn half_width(mean: f64, lo: f64, hi: f64) -> f64 {
    (mean - lo).max(hi - mean)
}

/// Quantile with linear interpolation between order statistics (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn bootstrap_ci(samples: &[f64], level: f64, resamples: usize, seed_value: u64) -> Result<BootstrapCi> {
    if samples.len() < 2 {
        return Err(Error::OutOfRange(format!(
            "bootstrap needs at least 2 samples (got {})",
            samples.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) || resamples == 0 {
        return Err(Error::config(
            "bootstrap level must lie in (0, 1) and resamples >= 1",
        ));
    }
    let n = samples.len();
    let mut rng = seed::rng(seed_value, &[tag::BOOTSTRAP]);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(BootstrapCi {
        mean: mean(samples),
        lo: quantile_sorted(&means, alpha),
        hi: quantile_sorted(&means, 1.0 - alpha),
    })
}

fn check_unit(values: &[f64], what: &str) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfRange(format!("{what} {v} outside [0, 1]")));
    }
    Ok(())
}
