use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{mean, median};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnRecord {
    pub run: String,
    pub environment: String,
    pub cycle: u32,
    pub phase: Phase,
    pub episode_index: u64,
    #[serde(rename = "return")]
    pub ret: f64,
    /// Episode length in environment steps, when logged.
    #[serde(default)]
    pub timesteps: Option<f64>,
}

type SeriesKey = (String, String, u32, Phase);

/// Episodic returns grouped by (run, environment, cycle, phase), each series
/// ordered by episode index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReturnLog {
    series: BTreeMap<SeriesKey, Vec<ReturnRecord>>,
}

const REQUIRED: [&str; 6] = ["run", "environment", "cycle", "phase", "episode_index", "return"];
const OPTIONAL: [&str; 1] = ["timesteps"];

impl ReturnLog {
    pub fn from_records(records: impl IntoIterator<Item = ReturnRecord>) -> Result<Self> {
        let mut series: BTreeMap<SeriesKey, Vec<ReturnRecord>> = BTreeMap::new();
        for r in records {
            if r.cycle == 0 {
                return Err(Error::OutOfRange("cycles are numbered from 1".into()));
            }
            if !r.ret.is_finite() {
                return Err(Error::NonFinite {
                    location: format!(
                        "return of {}/{} cycle {} episode {}",
                        r.run, r.environment, r.cycle, r.episode_index
                    ),
                    value: r.ret,
                });
            }
            series
                .entry((r.run.clone(), r.environment.clone(), r.cycle, r.phase))
                .or_default()
                .push(r);
        }
        for ((run, env, cycle, phase), list) in &mut series {
            list.sort_by_key(|r| r.episode_index);
            if list.windows(2).any(|w| w[0].episode_index == w[1].episode_index) {
                return Err(Error::config(format!(
                    "duplicate episode index in {run}/{env} cycle {cycle} {phase:?}"
                )));
            }
        }
        Ok(ReturnLog { series })
    }

    /// Parse the CSV schema `run,environment,cycle,phase,episode_index,return`
    /// with an optional `timesteps` column. Errors carry line numbers.
    pub fn from_csv(reader: impl Read, source: &str) -> Result<Self> {
        let parse_err = |line: u64, message: String| Error::Parse {
            source_name: source.to_string(),
            position: format!("line {line}"),
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        for h in headers.iter() {
            if !REQUIRED.contains(&h) && !OPTIONAL.contains(&h) {
                return Err(parse_err(1, format!("unknown column `{h}`")));
            }
        }
        let missing: Vec<&str> = REQUIRED
            .iter()
            .copied()
            .filter(|c| !headers.iter().any(|h| h == *c))
            .collect();
        if !missing.is_empty() {
            return Err(parse_err(1, format!("missing columns: {}", missing.join(", "))));
        }
        let mut records = Vec::new();
        for row in rdr.deserialize::<ReturnRecord>() {
            let record = row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            records.push(record);
        }
        if records.is_empty() {
            return Err(parse_err(2, "no data rows".into()));
        }
        Self::from_records(records)
    }

    pub fn runs(&self) -> BTreeSet<&str> {
        self.series.keys().map(|k| k.0.as_str()).collect()
    }

    pub fn environments(&self) -> BTreeSet<&str> {
        self.series.keys().map(|k| k.1.as_str()).collect()
    }

    /// Largest cycle present anywhere in the log.
    pub fn last_cycle(&self) -> Option<u32> {
        self.series.keys().map(|k| k.2).max()
    }

    pub fn series(&self, run: &str, env: &str, cycle: u32, phase: Phase) -> Option<&[ReturnRecord]> {
        self.series
            .get(&(run.to_string(), env.to_string(), cycle, phase))
            .map(Vec::as_slice)
    }
}

/// How the final window of a cycle is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowRule {
    /// The last `ceil(p·n)` episodes.
    #[default]
    Episodes,
    /// Episodes ending inside the last fraction `p` of the cycle's timesteps.
    Timesteps,
}

fn final_window(series: &[ReturnRecord], p: f64, rule: WindowRule) -> Result<&[ReturnRecord]> {
    let n = series.len();
    if n == 0 {
        return Err(Error::Empty("empty return series".into()));
    }
    match rule {
        WindowRule::Episodes => {
            // Guard against p·n landing a hair above an integer.
            let k = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
            Ok(&series[n - k.min(n)..])
        }
        WindowRule::Timesteps => {
            let steps: Vec<f64> = series
                .iter()
                .map(|r| {
                    r.timesteps.ok_or_else(|| {
                        Error::Missing(format!(
                            "timesteps for episode {} of {}/{}",
                            r.episode_index, r.run, r.environment
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let total: f64 = steps.iter().sum();
            let start = total * (1.0 - p);
            let mut cum = 0.0;
            let first = steps
                .iter()
                .position(|s| {
                    cum += s;
                    cum > start
                })
                .unwrap_or(n - 1);
            Ok(&series[first..])
        }
    }
}

fn window_mean(series: &[ReturnRecord], p: f64, rule: WindowRule) -> Result<f64> {
    let w = final_window(series, p, rule)?;
    Ok(w.iter().map(|r| r.ret).sum::<f64>() / w.len() as f64)
}

/// Median across environments of the mean return over the final fraction
/// `p` of each environment's last-cycle training episodes.
pub fn plasticity_score(log: &ReturnLog, run: &str, p: f64) -> Result<f64> {
    plasticity_score_with(log, run, p, WindowRule::Episodes)
}

pub fn plasticity_score_with(log: &ReturnLog, run: &str, p: f64, rule: WindowRule) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::config(format!(
            "window fraction must lie in (0, 1] (got {p})"
        )));
    }
    let last = log
        .last_cycle()
        .ok_or_else(|| Error::Empty("return log".into()))?;
    let envs = log.environments();
    let missing: Vec<&str> = envs
        .iter()
        .copied()
        .filter(|e| log.series(run, e, last, Phase::Train).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Missing(format!(
            "run `{run}` has no cycle-{last} training returns for: {}",
            missing.join(", ")
        )));
    }
    let means = envs
        .iter()
        .map(|e| window_mean(log.series(run, e, last, Phase::Train).expect("checked"), p, rule))
        .collect::<Result<Vec<_>>>()?;
    median(&means)
}

/// End-of-cycle train return (final 15% window) minus mean test return.
pub fn generalization_gap(log: &ReturnLog, run: &str, env: &str, cycle: u32) -> Result<f64> {
    let missing = |phase: &str| {
        Error::Missing(format!(
            "run `{run}`, environment `{env}`: no {phase} returns in cycle {cycle}"
        ))
    };
    let train = log
        .series(run, env, cycle, Phase::Train)
        .ok_or_else(|| missing("train"))?;
    let test = log
        .series(run, env, cycle, Phase::Test)
        .ok_or_else(|| missing("test"))?;
    let r_train = window_mean(train, 0.15, WindowRule::Episodes)?;
    let r_test = test.iter().map(|r| r.ret).sum::<f64>() / test.len() as f64;
    Ok(r_train - r_test)
}

/// `GAP_to − GAP_from` for one environment.
pub fn gap_delta_between(log: &ReturnLog, run: &str, env: &str, from: u32, to: u32) -> Result<f64> {
    Ok(generalization_gap(log, run, env, to)? - generalization_gap(log, run, env, from)?)
}

/// `Δ = GAP_3 − GAP_1`; positive means the train-test gap widened.
pub fn gap_delta(log: &ReturnLog, run: &str, env: &str) -> Result<f64> {
    gap_delta_between(log, run, env, 1, 3)
}

/// `(median, mean)` of per-environment deltas.
pub fn gap_summary(deltas: &[f64]) -> Result<(f64, f64)> {
    Ok((median(deltas)?, mean(deltas)))
}
