use serde::{Deserialize, Serialize};

use super::{Gradients, Network};
use crate::{Error, Result};

/// Optimizer choice. Adam uses the standard bias-corrected update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "beta1")]
        beta1: f64,
        #[serde(default = "beta2")]
        beta2: f64,
        #[serde(default = "adam_eps")]
        eps: f64,
    },
}

fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn adam_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: beta1(),
            beta2: beta2(),
            eps: adam_eps(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        OptimizerKind::Sgd { lr }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Sgd { lr } | OptimizerKind::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.lr();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive (got {lr})"
            )));
        }
        if let OptimizerKind::Adam {
            beta1, beta2, eps, ..
        } = *self
        {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return Err(Error::config("Adam needs 0 <= beta < 1 and eps > 0"));
            }
        }
        Ok(())
    }
}

/// Optimizer with per-parameter-group moment buffers.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Result<Self> {
        kind.validate()?;
        Ok(Optimizer {
            kind,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    /// Apply one update. Non-finite gradients abort before any parameter changes.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        check_gradients(net, grads)?;
        let groups = param_groups(net);
        if self.m.is_empty() {
            self.m = groups.iter().map(|&n| vec![0.0; n]).collect();
            self.v = self.m.clone();
        } else if self.m.iter().map(Vec::len).ne(groups.iter().copied()) {
            return Err(Error::config("optimizer state does not match the network"));
        }
        self.step += 1;
        let kind = self.kind;
        let t = self.step as i32;
        let mut g_idx = 0;
        let mut update = |params: &mut dyn Iterator<Item = &mut f64>,
                          grad: &mut dyn Iterator<Item = &f64>| {
            let m = &mut self.m[g_idx];
            let v = &mut self.v[g_idx];
            g_idx += 1;
            for (k, (p, &g)) in params.zip(grad).enumerate() {
                match kind {
                    OptimizerKind::Sgd { lr } => *p -= lr * g,
                    OptimizerKind::Adam {
                        lr,
                        beta1,
                        beta2,
                        eps,
                    } => {
                        m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                        v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                        let m_hat = m[k] / (1.0 - beta1.powi(t));
                        let v_hat = v[k] / (1.0 - beta2.powi(t));
                        *p -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        };
        for (layer, g) in net.layers.iter_mut().zip(&grads.layers) {
            update(&mut layer.weight.iter_mut(), &mut g.weight.iter());
            update(&mut layer.bias.iter_mut(), &mut g.bias.iter());
        }
        for (state, g) in net.acts.iter_mut().zip(&grads.acts) {
            let mut params = state.params();
            update(&mut params.iter_mut(), &mut g.iter());
            state.set_params(&params);
        }
        Ok(())
    }
}

fn param_groups(net: &Network) -> Vec<usize> {
    let mut groups = Vec::new();
    for layer in &net.layers {
        groups.push(layer.weight.len());
        groups.push(layer.bias.len());
    }
    groups.extend(net.acts.iter().map(|a| a.num_params()));
    groups
}

fn check_gradients(net: &Network, grads: &Gradients) -> Result<()> {
    if grads.layers.len() != net.layers.len() || grads.acts.len() != net.acts.len() {
        return Err(Error::config("gradient structure does not match the network"));
    }
    for (i, (layer, g)) in net.layers.iter().zip(&grads.layers).enumerate() {
        if g.weight.dim() != layer.weight.dim() || g.bias.len() != layer.bias.len() {
            return Err(Error::config(format!("layer{i}: gradient shape mismatch")));
        }
        if let Some(((r, c), &v)) = g.weight.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("gradient of layer{i}.weight[{r},{c}]"),
                value: v,
            });
        }
        if let Some((j, &v)) = g.bias.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("gradient of layer{i}.bias[{j}]"),
                value: v,
            });
        }
    }
    for (i, (state, g)) in net.acts.iter().zip(&grads.acts).enumerate() {
        if g.len() != state.num_params() {
            return Err(Error::config(format!("layer{i}.act: gradient length mismatch")));
        }
        if let Some((j, &v)) = g.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("gradient of layer{i}.act[{j}]"),
                value: v,
            });
        }
    }
    Ok(())
}
