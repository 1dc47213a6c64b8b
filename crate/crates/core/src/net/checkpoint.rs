use std::collections::BTreeMap;
use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Network, NetworkSpec};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "plasticity-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    /// Row-major values.
    pub data: Vec<f64>,
}

/// JSON checkpoint: the network spec plus a map from parameter path to tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub spec: NetworkSpec,
    pub params: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn from_network(net: &Network) -> Self {
        let mut params = BTreeMap::new();
        for (i, layer) in net.layers.iter().enumerate() {
            params.insert(
                format!("layer{i}.weight"),
                Tensor {
                    shape: layer.weight.shape().to_vec(),
                    data: layer.weight.iter().copied().collect(),
                },
            );
            params.insert(
                format!("layer{i}.bias"),
                Tensor {
                    shape: vec![layer.bias.len()],
                    data: layer.bias.to_vec(),
                },
            );
        }
        for (i, state) in net.acts.iter().enumerate() {
            if state.num_params() > 0 {
                params.insert(
                    format!("layer{i}.act"),
                    Tensor {
                        shape: vec![state.num_params()],
                        data: state.params(),
                    },
                );
            }
        }
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            spec: net.spec.clone(),
            params,
        }
    }

    pub fn into_network(self) -> Result<Network> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::config(format!(
                "unsupported checkpoint format {:?}",
                self.format
            )));
        }
        let mut net = Network::init(&self.spec, 0)?;
        let mut params = self.params;
        let mut take = |path: String, shape: &[usize]| -> Result<Vec<f64>> {
            let t = params
                .remove(&path)
                .ok_or_else(|| Error::Missing(format!("checkpoint has no tensor {path}")))?;
            if t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::config(format!(
                    "{path}: shape {:?} does not match expected {shape:?}",
                    t.shape
                )));
            }
            if let Some((k, &v)) = t.data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::NonFinite {
                    location: format!("{path}[{k}]"),
                    value: v,
                });
            }
            Ok(t.data)
        };
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let (r, c) = layer.weight.dim();
            let w = take(format!("layer{i}.weight"), &[r, c])?;
            layer.weight = Array2::from_shape_vec((r, c), w).expect("checked shape");
            layer.bias = Array1::from(take(format!("layer{i}.bias"), &[c])?);
        }
        for (i, state) in net.acts.iter_mut().enumerate() {
            let n = state.num_params();
            if n > 0 {
                state.set_params(&take(format!("layer{i}.act"), &[n])?);
            }
        }
        if let Some(extra) = params.keys().next() {
            return Err(Error::config(format!("unexpected checkpoint tensor {extra}")));
        }
        Ok(net)
    }
}

pub fn save_checkpoint(net: &Network, writer: impl Write) -> Result<()> {
    serde_json::to_writer(writer, &Checkpoint::from_network(net))
        .map_err(|e| Error::config(format!("checkpoint serialization failed: {e}")))
}

pub fn load_checkpoint(reader: impl Read) -> Result<Network> {
    let ckpt: Checkpoint = serde_json::from_reader(reader).map_err(|e| Error::Parse {
        source_name: "checkpoint".into(),
        position: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    ckpt.into_network()
}
