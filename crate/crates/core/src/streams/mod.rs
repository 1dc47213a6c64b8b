//! Datasets, continual task streams and the replay buffer.

mod io;
mod replay;
mod source;
mod tasks;

pub use io::{load_csv, load_dataset, load_idx, parse_csv, parse_idx_images, parse_idx_labels, DataFormat};
pub use replay::{ReplayBuffer, ReplayItem};
pub use source::DataSource;
pub use tasks::{StreamConfig, StreamKind, Task, TaskStream};

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seed::{self, tag};
use crate::{Error, Result};

/// Labelled feature matrix with features in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::Empty("dataset has no samples".into()));
        }
        if features.nrows() != labels.len() {
            return Err(Error::config(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::OutOfRange(format!(
                "label {l} of sample {i} with {classes} classes"
            )));
        }
        if let Some(((r, c), &v)) = features.indexed_iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange(format!(
                "feature [{r},{c}] = {v} outside [0, 1]"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    /// Rows `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Sample indices grouped by class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.classes];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

/// Seeded synthetic dataset: each class is a mixture of Gaussian clusters
/// with centres uniform in the unit cube; samples are clipped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    #[serde(default = "default_clusters")]
    pub clusters_per_class: usize,
    #[serde(default = "default_spread")]
    pub spread: f64,
}

fn default_clusters() -> usize {
    3
}
fn default_spread() -> f64 {
    0.15
}

impl BlobConfig {
    pub fn new(classes: usize, per_class: usize, dim: usize) -> Self {
        BlobConfig {
            classes,
            per_class,
            dim,
            clusters_per_class: default_clusters(),
            spread: default_spread(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.per_class == 0 || self.dim == 0 || self.clusters_per_class == 0 {
            return Err(Error::config("blob dataset sizes must be >= 1"));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::config("blob spread must be finite and >= 0"));
        }
        Ok(())
    }
}

pub fn gaussian_blobs(cfg: &BlobConfig, seed_value: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = seed::rng(seed_value, &[tag::DATA]);
    let centres: Vec<Vec<Vec<f64>>> = (0..cfg.classes)
        .map(|_| {
            (0..cfg.clusters_per_class)
                .map(|_| (0..cfg.dim).map(|_| rng.random::<f64>()).collect())
                .collect()
        })
        .collect();
    let n = cfg.classes * cfg.per_class;
    let mut features = Array2::zeros((n, cfg.dim));
    let mut labels = Vec::with_capacity(n);
    for (k, class_centres) in centres.iter().enumerate() {
        for i in 0..cfg.per_class {
            let row = k * cfg.per_class + i;
            let centre = &class_centres[i % cfg.clusters_per_class];
            for (d, &c) in centre.iter().enumerate() {
                let noise: f64 = StandardNormal.sample(&mut rng);
                features[[row, d]] = (c + cfg.spread * noise).clamp(0.0, 1.0);
            }
            labels.push(k);
        }
    }
    Dataset::new(features, labels, cfg.classes)
}
