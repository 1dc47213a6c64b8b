use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{gaussian_blobs, load_dataset, BlobConfig, DataFormat, Dataset};
use crate::{Error, Result};

/// Where the base dataset of a stream comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Synthetic Gaussian blobs, generated per seed.
    Blobs {
        classes: usize,
        per_class: usize,
        dim: usize,
        #[serde(default = "default_clusters")]
        clusters_per_class: usize,
        #[serde(default = "default_spread")]
        spread: f64,
    },
    File {
        path: PathBuf,
        format: DataFormat,
        #[serde(default)]
        classes: Option<usize>,
    },
}

fn default_clusters() -> usize {
    BlobConfig::new(1, 1, 1).clusters_per_class
}
fn default_spread() -> f64 {
    BlobConfig::new(1, 1, 1).spread
}

impl DataSource {
    pub fn blobs(cfg: &BlobConfig) -> Self {
        DataSource::Blobs {
            classes: cfg.classes,
            per_class: cfg.per_class,
            dim: cfg.dim,
            clusters_per_class: cfg.clusters_per_class,
            spread: cfg.spread,
        }
    }

    pub fn blob_config(&self) -> Option<BlobConfig> {
        match *self {
            DataSource::Blobs {
                classes,
                per_class,
                dim,
                clusters_per_class,
                spread,
            } => Some(BlobConfig {
                classes,
                per_class,
                dim,
                clusters_per_class,
                spread,
            }),
            DataSource::File { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DataSource::Blobs { .. } => self.blob_config().expect("blobs").validate(),
            DataSource::File { path, .. } if path.as_os_str().is_empty() => {
                Err(Error::config("data.path must not be empty"))
            }
            DataSource::File { .. } => Ok(()),
        }
    }

    pub fn load(&self, seed_value: u64) -> Result<Dataset> {
        match self {
            DataSource::Blobs { .. } => gaussian_blobs(&self.blob_config().expect("blobs"), seed_value),
            DataSource::File {
                path,
                format,
                classes,
            } => load_dataset(path, *format, *classes),
        }
    }
}
