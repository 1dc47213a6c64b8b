use ndarray::{Array2, Axis};
use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::seed::{self, tag};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    /// A fresh fixed feature permutation per task over a fixed subset.
    PermutedInput,
    /// Fixed inputs, fresh uniform random labels per task.
    RandomLabel,
    /// Alternating hard (several fresh classes) and easy (one fresh class) tasks.
    SplitClassAlternating,
    /// Two fresh classes per task, relabelled to {0, 1}.
    BinaryPair,
}

/// Shape of a task stream. `samples` is the fixed subset size for
/// permuted/random-label streams; `per_class` applies to the class-based ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    pub kind: StreamKind,
    pub tasks: usize,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub samples: usize,
    #[serde(default)]
    pub per_class: usize,
    /// Classes in a hard split-class task.
    #[serde(default = "default_hard_classes")]
    pub hard_classes: usize,
    /// Fixed number of update steps per task. Split-class streams default to
    /// `ceil(hard samples × epochs / batch)`.
    #[serde(default)]
    pub step_budget: Option<usize>,
}

fn default_hard_classes() -> usize {
    5
}

fn scaled(n: usize, scale: usize) -> usize {
    n.div_ceil(scale).max(1)
}

impl StreamConfig {
    /// Benchmark schedules, with per-task data sizes divided by `scale`.
    /// Names: `permuted_mnist`, `random_label_mnist`, `random_label_cifar`,
    /// `five_plus_one_cifar`, `continual_imagenet`.
    pub fn preset(name: &str, scale: usize) -> Result<Self> {
        if scale == 0 {
            return Err(Error::config("scale must be >= 1"));
        }
        let base = |kind, tasks, batch_size, epochs| StreamConfig {
            kind,
            tasks,
            batch_size,
            epochs,
            samples: 0,
            per_class: 0,
            hard_classes: default_hard_classes(),
            step_budget: None,
        };
        Ok(match name {
            "permuted_mnist" => StreamConfig {
                samples: scaled(10_000, scale),
                ..base(StreamKind::PermutedInput, 500, 16, 1)
            },
            "random_label_mnist" | "random_label_cifar" => StreamConfig {
                samples: scaled(1_200, scale),
                ..base(StreamKind::RandomLabel, 50, 16, 400)
            },
            "five_plus_one_cifar" if scale == 1 => StreamConfig {
                per_class: 500,
                step_budget: Some(780),
                ..base(StreamKind::SplitClassAlternating, 15, 32, 10)
            },
            // Desk scale: two classes per hard task keeps the class budget of
            // a small synthetic dataset sufficient for the whole stream.
            "five_plus_one_cifar" => StreamConfig {
                per_class: scaled(500, scale),
                hard_classes: 2,
                ..base(StreamKind::SplitClassAlternating, 15, 32, 10)
            },
            "continual_imagenet" => StreamConfig {
                per_class: scaled(600, scale),
                ..base(StreamKind::BinaryPair, 500, 100, 10)
            },
            other => return Err(Error::config(format!("unknown stream preset `{other}`"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config("stream tasks, batch_size and epochs must be >= 1"));
        }
        match self.kind {
            StreamKind::PermutedInput | StreamKind::RandomLabel if self.samples == 0 => {
                Err(Error::config("stream.samples must be >= 1"))
            }
            StreamKind::SplitClassAlternating | StreamKind::BinaryPair if self.per_class == 0 => {
                Err(Error::config("stream.per_class must be >= 1"))
            }
            StreamKind::SplitClassAlternating if self.hard_classes == 0 => {
                Err(Error::config("stream.hard_classes must be >= 1"))
            }
            _ if self.step_budget == Some(0) => Err(Error::config("stream.step_budget must be >= 1")),
            _ => Ok(()),
        }
    }

    /// Update steps in every task.
    pub fn steps_per_task(&self) -> usize {
        if let Some(b) = self.step_budget {
            return b;
        }
        match self.kind {
            StreamKind::PermutedInput | StreamKind::RandomLabel => {
                self.epochs * self.samples.div_ceil(self.batch_size)
            }
            StreamKind::SplitClassAlternating => {
                (self.hard_classes * self.per_class * self.epochs).div_ceil(self.batch_size)
            }
            StreamKind::BinaryPair => self.epochs * (2 * self.per_class).div_ceil(self.batch_size),
        }
    }

    /// Classes consumed by task `t` (class-based streams).
    fn classes_in_task(&self, t: usize) -> usize {
        match self.kind {
            StreamKind::SplitClassAlternating if t.is_multiple_of(2) => self.hard_classes,
            StreamKind::SplitClassAlternating => 1,
            StreamKind::BinaryPair => 2,
            _ => 0,
        }
    }
}

/// One task: its data and the row indices of every update batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub index: usize,
    pub data: Dataset,
    /// Original class ids drawn by class-based streams.
    pub source_classes: Vec<usize>,
    pub batches: Vec<Vec<usize>>,
}

impl Task {
    pub fn steps(&self) -> usize {
        self.batches.len()
    }

    pub fn batch(&self, step: usize) -> (Array2<f64>, Vec<usize>) {
        let idx = &self.batches[step];
        (
            self.data.features.select(Axis(0), idx),
            idx.iter().map(|&i| self.data.labels[i]).collect(),
        )
    }
}

/// Deterministic generator of the tasks of one stream.
#[derive(Debug, Clone)]
pub struct TaskStream {
    pub config: StreamConfig,
    base: Dataset,
    seed: u64,
    subset: Vec<usize>,
    class_order: Vec<usize>,
    by_class: Vec<Vec<usize>>,
}

impl TaskStream {
    pub fn new(config: StreamConfig, base: Dataset, seed_value: u64) -> Result<Self> {
        config.validate()?;
        let mut subset = Vec::new();
        let mut class_order = Vec::new();
        let by_class = base.class_indices();
        match config.kind {
            StreamKind::PermutedInput | StreamKind::RandomLabel => {
                if config.samples > base.len() {
                    return Err(Error::config(format!(
                        "stream needs {} samples, dataset has {}",
                        config.samples,
                        base.len()
                    )));
                }
                let mut rng = seed::rng(seed_value, &[tag::SUBSET]);
                subset = index::sample(&mut rng, base.len(), config.samples).into_vec();
                subset.sort_unstable();
            }
            StreamKind::SplitClassAlternating | StreamKind::BinaryPair => {
                if let Some((k, _)) = by_class
                    .iter()
                    .enumerate()
                    .find(|(_, v)| !v.is_empty() && v.len() < config.per_class)
                {
                    return Err(Error::config(format!(
                        "class {k} has fewer than {} samples",
                        config.per_class
                    )));
                }
                class_order = (0..base.classes).filter(|&k| !by_class[k].is_empty()).collect();
                class_order.shuffle(&mut seed::rng(seed_value, &[tag::CLASSES]));
            }
        }
        Ok(TaskStream {
            config,
            base,
            seed: seed_value,
            subset,
            class_order,
            by_class,
        })
    }

    pub fn base(&self) -> &Dataset {
        &self.base
    }

    pub fn input_dim(&self) -> usize {
        self.base.dim()
    }

    /// Size of the classifier head the stream needs.
    pub fn num_outputs(&self) -> usize {
        match self.config.kind {
            StreamKind::BinaryPair => 2,
            _ => self.base.classes,
        }
    }

    /// Number of tasks the stream can actually deliver (the class budget may
    /// end it before `config.tasks`).
    pub fn available_tasks(&self) -> usize {
        let mut used = 0;
        for t in 0..self.config.tasks {
            let need = self.config.classes_in_task(t);
            if need > 0 && used + need > self.class_order.len() {
                return t;
            }
            used += need;
        }
        self.config.tasks
    }

    /// Feature permutation of task `t` (permuted-input streams).
    pub fn permutation(&self, t: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.base.dim()).collect();
        perm.shuffle(&mut seed::rng(self.seed, &[tag::PERMUTATION, t as u64]));
        perm
    }

    pub fn task(&self, t: usize) -> Result<Task> {
        if t >= self.config.tasks {
            return Err(Error::StreamExhausted(format!(
                "task {t} requested from a stream of {} tasks",
                self.config.tasks
            )));
        }
        let (data, source_classes) = match self.config.kind {
            StreamKind::PermutedInput => {
                let sub = self.base.select(&self.subset);
                let perm = self.permutation(t);
                let features = sub.features.select(Axis(1), &perm);
                (Dataset { features, ..sub }, Vec::new())
            }
            StreamKind::RandomLabel => {
                let sub = self.base.select(&self.subset);
                let mut rng = seed::rng(self.seed, &[tag::LABELS, t as u64]);
                let k = self.base.classes;
                let labels = (0..sub.len()).map(|_| rng.random_range(0..k)).collect();
                (Dataset { labels, ..sub }, Vec::new())
            }
            StreamKind::SplitClassAlternating | StreamKind::BinaryPair => self.class_task(t)?,
        };
        let batches = self.batches(t, data.len());
        Ok(Task {
            index: t,
            data,
            source_classes,
            batches,
        })
    }

    fn class_task(&self, t: usize) -> Result<(Dataset, Vec<usize>)> {
        let start: usize = (0..t).map(|i| self.config.classes_in_task(i)).sum();
        let need = self.config.classes_in_task(t);
        if start + need > self.class_order.len() {
            return Err(Error::StreamExhausted(format!(
                "task {t} needs {need} fresh classes but only {} of {} remain",
                self.class_order.len().saturating_sub(start),
                self.class_order.len()
            )));
        }
        let classes = self.class_order[start..start + need].to_vec();
        let mut rows = Vec::with_capacity(need * self.config.per_class);
        let mut labels = Vec::with_capacity(need * self.config.per_class);
        for (j, &c) in classes.iter().enumerate() {
            let pool = &self.by_class[c];
            let mut rng = seed::rng(self.seed, &[tag::SUBSET, t as u64, c as u64]);
            let mut pick = index::sample(&mut rng, pool.len(), self.config.per_class).into_vec();
            pick.sort_unstable();
            for p in pick {
                rows.push(pool[p]);
                labels.push(match self.config.kind {
                    StreamKind::BinaryPair => j,
                    _ => c,
                });
            }
        }
        let features = self.base.features.select(Axis(0), &rows);
        let classes_out = if self.config.kind == StreamKind::BinaryPair {
            2
        } else {
            self.base.classes
        };
        Ok((Dataset::new(features, labels, classes_out)?, classes))
    }

    /// Epoch-wise reshuffled index stream. Budgeted streams concatenate epochs
    /// (cycling the data) and cut full batches until the budget is spent;
    /// otherwise each epoch ends with a possibly partial batch.
    fn batches(&self, t: usize, n: usize) -> Vec<Vec<usize>> {
        let b = self.config.batch_size;
        let shuffled = |epoch: usize| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut seed::rng(self.seed, &[tag::SHUFFLE, t as u64, epoch as u64]));
            order
        };
        let budgeted =
            self.config.step_budget.is_some() || self.config.kind == StreamKind::SplitClassAlternating;
        if !budgeted {
            return (0..self.config.epochs)
                .flat_map(|e| shuffled(e).chunks(b).map(<[usize]>::to_vec).collect::<Vec<_>>())
                .collect();
        }
        let steps = self.config.steps_per_task();
        let mut out = Vec::with_capacity(steps);
        let mut current = Vec::with_capacity(b);
        let mut epoch = 0;
        while out.len() < steps {
            for i in shuffled(epoch) {
                current.push(i);
                if current.len() == b {
                    out.push(std::mem::replace(&mut current, Vec::with_capacity(b)));
                    if out.len() == steps {
                        break;
                    }
                }
            }
            epoch += 1;
        }
        out
    }
}
