//! A small fully-connected network with exact manual backpropagation.
//!
//! Hidden layer `ℓ` computes `z = x·W + b`, scales it by the shock factor `γ`
//! and applies its activation. The output layer is linear.

mod checkpoint;
mod diagnostics;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use diagnostics::{dead_unit_fraction, layer_saturation, per_sample_gradients};
pub use optim::{Optimizer, OptimizerKind};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::{
    act_backward, act_forward, kaiming_gain, ActTape, ActivationKind, ActivationSpec, ActivationState, Mode,
    PreluScope,
};
use crate::seed::{self, tag, Rng};
use crate::{Error, Result};

/// Layer widths and per-layer activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: usize,
    /// Interface width of each hidden layer (what the next layer consumes).
    pub hidden: Vec<usize>,
    /// Classifier head size.
    pub output: usize,
    /// One activation per hidden layer.
    pub activations: Vec<ActivationSpec>,
    /// CReLU layers get a producer of half the interface width.
    #[serde(default = "default_true")]
    pub crelu_halving: bool,
}

fn default_true() -> bool {
    true
}

impl NetworkSpec {
    /// MLP with the same activation in every hidden layer.
    pub fn mlp(input: usize, hidden: &[usize], output: usize, activation: ActivationSpec) -> Self {
        NetworkSpec {
            input,
            hidden: hidden.to_vec(),
            output,
            activations: vec![activation; hidden.len()],
            crelu_halving: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || self.hidden.contains(&0) {
            return Err(Error::config("network widths must be >= 1"));
        }
        if self.activations.len() != self.hidden.len() {
            return Err(Error::config(format!(
                "{} hidden layers but {} activations",
                self.hidden.len(),
                self.activations.len()
            )));
        }
        for (l, (act, &h)) in self.activations.iter().zip(&self.hidden).enumerate() {
            act.validate()?;
            if act.kind == ActivationKind::Crelu && self.crelu_halving && h % 2 != 0 {
                return Err(Error::config(format!(
                    "hidden layer {l}: CReLU with producer halving needs an even width (got {h})"
                )));
            }
        }
        Ok(())
    }

    /// Pre-activation width of hidden layer `l`.
    pub fn producer_width(&self, l: usize) -> usize {
        let h = self.hidden[l];
        if self.activations[l].kind == ActivationKind::Crelu && self.crelu_halving {
            h / 2
        } else {
            h
        }
    }

    /// Width actually emitted by hidden layer `l`.
    pub fn interface_width(&self, l: usize) -> usize {
        self.activations[l].output_width(self.producer_width(l))
    }

    /// `(fan_in, fan_out)` of every linear layer, output layer last.
    pub fn linear_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.input;
        for l in 0..self.hidden.len() {
            shapes.push((fan_in, self.producer_width(l)));
            fan_in = self.interface_width(l);
        }
        shapes.push((fan_in, self.output));
        shapes
    }

    pub fn num_linear_params(&self) -> usize {
        self.linear_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[fan_in × fan_out]`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Network parameters: linear layers plus one activation state per hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub layers: Vec<Linear>,
    pub acts: Vec<ActivationState>,
}

/// Forward record for [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardTape {
    /// Input of every linear layer, output layer last.
    pub inputs: Vec<Array2<f64>>,
    /// Hidden pre-activations before scaling.
    pub pre: Vec<Array2<f64>>,
    pub act_tapes: Vec<ActTape>,
    pub gamma: f64,
}

/// Gradients mirroring [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Linear>,
    pub acts: Vec<Vec<f64>>,
}

/// One random stream per activation layer, keyed by the run seed and layer.
#[derive(Debug, Clone)]
pub struct ActivationRngs(pub Vec<Rng>);

impl ActivationRngs {
    pub fn new(seed: u64, layers: usize) -> Self {
        ActivationRngs(
            (0..layers)
                .map(|l| seed::rng(seed, &[tag::ACTIVATION, l as u64]))
                .collect(),
        )
    }
}

impl Network {
    /// Kaiming fan-in normal weights with the activation-specific gain, zero
    /// biases. The output layer uses gain 1.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.linear_shapes();
        let mut layers = Vec::with_capacity(shapes.len());
        for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
            let gain = match spec.activations.get(l) {
                Some(act) => kaiming_gain(act)?,
                None => 1.0,
            };
            let std = gain / (fan_in as f64).sqrt();
            let normal =
                Normal::new(0.0, std).map_err(|e| Error::config(format!("bad init std {std}: {e}")))?;
            let mut rng = seed::rng(seed, &[tag::INIT, l as u64]);
            let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || normal.sample(&mut rng));
            layers.push(Linear {
                weight,
                bias: Array1::zeros(fan_out),
            });
        }
        let acts = (0..spec.hidden.len())
            .map(|l| ActivationState::new(&spec.activations[l], spec.producer_width(l)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Network {
            spec: spec.clone(),
            layers,
            acts,
        })
    }

    pub fn num_hidden(&self) -> usize {
        self.spec.hidden.len()
    }

    /// Forward pass. Every hidden pre-activation is multiplied by `gamma`
    /// before its nonlinearity; randomized activations in [`Mode::Train`] draw
    /// from `rngs`.
    pub fn forward(
        &self,
        batch: ArrayView2<f64>,
        gamma: f64,
        mode: Mode,
        mut rngs: Option<&mut ActivationRngs>,
    ) -> Result<(Array2<f64>, ForwardTape)> {
        if batch.ncols() != self.spec.input {
            return Err(Error::config(format!(
                "batch has {} features, network expects {}",
                batch.ncols(),
                self.spec.input
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::config(format!("gamma must be positive (got {gamma})")));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.num_hidden());
        let mut act_tapes = Vec::with_capacity(self.num_hidden());
        let mut x = batch.to_owned();
        for l in 0..self.num_hidden() {
            let layer = &self.layers[l];
            let z = x.dot(&layer.weight) + &layer.bias;
            check_finite(&z, &format!("layer {l} pre-activation"))?;
            let scaled = if gamma != 1.0 { &z * gamma } else { z.clone() };
            let width = scaled.ncols();
            let flat = scaled.as_standard_layout();
            let rng = rngs.as_deref_mut().map(|r| &mut r.0[l]);
            let (y, tape) = act_forward(
                &self.spec.activations[l],
                &self.acts[l],
                flat.as_slice().expect("standard layout"),
                width,
                mode,
                rng,
            )
            .map_err(|e| with_layer(e, l))?;
            let out_width = self.spec.activations[l].output_width(width);
            let y = Array2::from_shape_vec((batch.nrows(), out_width), y).expect("activation output shape");
            inputs.push(std::mem::replace(&mut x, y));
            pre.push(z);
            act_tapes.push(tape);
        }
        let out = &self.layers[self.num_hidden()];
        let logits = x.dot(&out.weight) + &out.bias;
        check_finite(&logits, "output logits")?;
        inputs.push(x);
        Ok((
            logits,
            ForwardTape {
                inputs,
                pre,
                act_tapes,
                gamma,
            },
        ))
    }

    /// Exact reverse pass through a recorded forward. Returns gradients and the
    /// gradient with respect to each hidden pre-activation `z` (before γ).
    pub(crate) fn backward_full(
        &self,
        tape: &ForwardTape,
        dlogits: ArrayView2<f64>,
    ) -> Result<(Gradients, Vec<Array2<f64>>)> {
        let n_hidden = self.num_hidden();
        if dlogits.ncols() != self.spec.output || dlogits.nrows() != tape.inputs[0].nrows() {
            return Err(Error::config(format!(
                "dlogits shape {:?} does not match the forward batch",
                dlogits.shape()
            )));
        }
        let mut layer_grads: Vec<Option<Linear>> = vec![None; n_hidden + 1];
        let mut act_grads = vec![Vec::new(); n_hidden];
        let mut dzs = vec![Array2::zeros((0, 0)); n_hidden];

        let mut delta = dlogits.to_owned();
        for l in (0..=n_hidden).rev() {
            let input = &tape.inputs[l];
            layer_grads[l] = Some(Linear {
                weight: input.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if l == 0 {
                break;
            }
            let upstream = delta.dot(&self.layers[l].weight.t());
            let h = l - 1;
            let up = upstream.as_standard_layout();
            let (dx, dparams) = act_backward(
                &self.spec.activations[h],
                &self.acts[h],
                &tape.act_tapes[h],
                up.as_slice().expect("standard layout"),
            )
            .map_err(|e| with_layer(e, h))?;
            act_grads[h] = dparams;
            let width = tape.pre[h].ncols();
            let mut dz = Array2::from_shape_vec((input.nrows(), width), dx).expect("dz shape");
            if tape.gamma != 1.0 {
                dz *= tape.gamma;
            }
            dzs[h] = dz.clone();
            delta = dz;
        }
        Ok((
            Gradients {
                layers: layer_grads.into_iter().map(|g| g.expect("filled")).collect(),
                acts: act_grads,
            },
            dzs,
        ))
    }

    pub fn backward(&self, tape: &ForwardTape, dlogits: ArrayView2<f64>) -> Result<Gradients> {
        Ok(self.backward_full(tape, dlogits)?.0)
    }

    /// Number of scalar parameters, activation parameters included.
    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum::<usize>()
            + self.acts.iter().map(|a| a.num_params()).sum::<usize>()
    }

    /// All parameters flattened: per linear layer weight then bias, followed
    /// by every hidden layer's activation parameters.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend(layer.weight.iter());
            out.extend(layer.bias.iter());
        }
        for a in &self.acts {
            out.extend(a.params());
        }
        out
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::config(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                values.len()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *w = values[offset];
                offset += 1;
            }
        }
        for a in &mut self.acts {
            let n = a.num_params();
            a.set_params(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Mean softmax cross-entropy of a batch and its flattened gradient,
    /// evaluated in Eval mode (deterministic).
    pub fn loss_and_flat_gradient(
        &self,
        batch: ArrayView2<f64>,
        targets: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        let (logits, tape) = self.forward(batch, 1.0, Mode::Eval, None)?;
        let out = softmax_cross_entropy(logits.view(), targets)?;
        let grads = self.backward(&tape, out.dlogits.view())?;
        Ok((out.loss, grads.flatten()))
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(layer.weight.iter());
            out.extend(layer.bias.iter());
        }
        for a in &self.acts {
            out.extend(a.iter());
        }
        out
    }

    /// Tie `Global`-scope slope parameters: every layer receives the sum of
    /// all layers' gradients, so identical copies receive identical updates.
    pub fn tie_global(&mut self, spec: &NetworkSpec) {
        let tied: Vec<usize> = spec
            .activations
            .iter()
            .enumerate()
            .filter(|(_, a)| {
                matches!(a.kind, ActivationKind::Prelu | ActivationKind::BoPrelu)
                    && a.prelu_scope == PreluScope::Global
            })
            .map(|(l, _)| l)
            .collect();
        if tied.len() < 2 {
            return;
        }
        let total: f64 = tied.iter().map(|&l| self.acts[l][0]).sum();
        for &l in &tied {
            self.acts[l][0] = total;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.flatten().iter().all(|&g| g == 0.0)
    }
}

/// Result of [`softmax_cross_entropy`].
#[derive(Debug, Clone)]
pub struct LossOutput {
    /// Mean loss over the batch.
    pub loss: f64,
    /// Gradient of the mean loss with respect to the logits.
    pub dlogits: Array2<f64>,
    /// Number of rows whose arg-max equals the target.
    pub correct: usize,
}

/// Mean softmax cross-entropy with integer targets.
pub fn softmax_cross_entropy(logits: ArrayView2<f64>, targets: &[usize]) -> Result<LossOutput> {
    let (b, k) = logits.dim();
    if targets.len() != b || b == 0 {
        return Err(Error::config(format!(
            "{} targets for a batch of {b} rows",
            targets.len()
        )));
    }
    let mut dlogits = Array2::zeros((b, k));
    let mut loss = 0.0;
    let mut correct = 0;
    for (i, row) in logits.outer_iter().enumerate() {
        let t = targets[i];
        if t >= k {
            return Err(Error::OutOfRange(format!("target {t} with {k} classes")));
        }
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[t];
        for (j, &v) in row.iter().enumerate() {
            let p = (v - log_z).exp();
            dlogits[[i, j]] = (p - if j == t { 1.0 } else { 0.0 }) / b as f64;
        }
        if argmax(row.iter().copied()) == t {
            correct += 1;
        }
    }
    Ok(LossOutput {
        loss: loss / b as f64,
        dlogits,
        correct,
    })
}

/// Index of the largest value (first on ties).
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Fraction of rows classified correctly, in Eval mode.
pub fn accuracy(net: &Network, batch: ArrayView2<f64>, targets: &[usize]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Empty("accuracy of an empty batch".into()));
    }
    let (logits, _) = net.forward(batch, 1.0, Mode::Eval, None)?;
    let correct = logits
        .outer_iter()
        .zip(targets)
        .filter(|(row, &t)| argmax(row.iter().copied()) == t)
        .count();
    Ok(correct as f64 / targets.len() as f64)
}

/// Statistics of one optimization step.
#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub loss: f64,
    /// Online accuracy on the batch, measured by the training forward pass.
    pub accuracy: f64,
}

/// Forward, backward and update on one batch.
pub fn train_step(
    net: &mut Network,
    opt: &mut Optimizer,
    batch: ArrayView2<f64>,
    targets: &[usize],
    gamma: f64,
    rngs: &mut ActivationRngs,
) -> Result<StepStats> {
    let (logits, tape) = net.forward(batch, gamma, Mode::Train, Some(rngs))?;
    let out = softmax_cross_entropy(logits.view(), targets)?;
    let mut grads = net.backward(&tape, out.dlogits.view())?;
    grads.tie_global(&net.spec);
    opt.step(net, &grads)?;
    Ok(StepStats {
        loss: out.loss,
        accuracy: out.correct as f64 / targets.len() as f64,
    })
}

fn check_finite(a: &Array2<f64>, what: &str) -> Result<()> {
    if let Some(((r, c), &v)) = a.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            location: format!("{what} [row {r}, unit {c}]"),
            value: v,
        });
    }
    Ok(())
}

fn with_layer(e: Error, layer: usize) -> Error {
    match e {
        Error::NonFinite { location, value } => Error::NonFinite {
            location: format!("hidden layer {layer}: {location}"),
            value,
        },
        Error::Config(msg) => Error::Config(format!("hidden layer {layer}: {msg}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_dlogits_give_zero_gradients() {
        let spec = NetworkSpec::mlp(3, &[4, 4], 2, ActivationSpec::leaky_relu(0.2));
        let net = Network::init(&spec, 1).unwrap();
        let x = array![[0.1, -0.2, 0.3], [1.0, 0.5, -0.5]];
        let (_, tape) = net.forward(x.view(), 1.0, Mode::Eval, None).unwrap();
        let g = net.backward(&tape, Array2::zeros((2, 2)).view()).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn linear_only_network_is_affine() {
        let spec = NetworkSpec::mlp(2, &[], 2, ActivationSpec::new(ActivationKind::Relu));
        let mut net = Network::init(&spec, 0).unwrap();
        net.layers[0].weight = array![[1.0, 2.0], [3.0, 4.0]];
        net.layers[0].bias = array![0.5, -0.5];
        let (logits, _) = net
            .forward(array![[1.0, 1.0]].view(), 1.0, Mode::Eval, None)
            .unwrap();
        assert_eq!(logits, array![[4.5, 5.5]]);
    }

    #[test]
    fn crelu_producer_is_halved() {
        let spec = NetworkSpec::mlp(5, &[8, 6], 3, ActivationSpec::new(ActivationKind::Crelu));
        assert_eq!(spec.linear_shapes(), vec![(5, 4), (8, 3), (6, 3)]);
        let odd = NetworkSpec::mlp(5, &[7], 3, ActivationSpec::new(ActivationKind::Crelu));
        assert!(odd.validate().is_err());
    }

    #[test]
    fn softmax_gradient_sums_to_zero_per_row() {
        let logits = array![[1.0, 2.0, 0.5], [-1.0, 0.0, 3.0]];
        let out = softmax_cross_entropy(logits.view(), &[1, 0]).unwrap();
        for row in out.dlogits.outer_iter() {
            assert!(row.sum().abs() < 1e-15);
        }
        assert_eq!(out.correct, 1);
    }

    #[test]
    fn non_finite_pre_activation_names_layer() {
        let spec = NetworkSpec::mlp(1, &[2], 2, ActivationSpec::new(ActivationKind::Relu));
        let mut net = Network::init(&spec, 0).unwrap();
        net.layers[0].weight[[0, 1]] = f64::INFINITY;
        let err = net
            .forward(array![[1.0]].view(), 1.0, Mode::Eval, None)
            .unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
    }
}
