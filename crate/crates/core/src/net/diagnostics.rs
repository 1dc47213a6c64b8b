use ndarray::{Array2, ArrayView2};

use super::{softmax_cross_entropy, Network};
use crate::activation::{derivative_magnitudes, Mode};
use crate::{Error, Result};

/// Per-sample gradients of the un-averaged cross-entropy with respect to the
/// weights of linear layer `layer` (0 is the input layer). Column `i` is the
/// row-major flattened `[fan_in × fan_out]` gradient for sample `i`.
pub fn per_sample_gradients(
    net: &Network,
    batch: ArrayView2<f64>,
    targets: &[usize],
    layer: usize,
) -> Result<Array2<f64>> {
    let m = batch.nrows();
    if m == 0 {
        return Err(Error::Empty("per-sample gradients of an empty batch".into()));
    }
    if layer >= net.layers.len() {
        return Err(Error::OutOfRange(format!(
            "layer {layer} of a network with {} linear layers",
            net.layers.len()
        )));
    }
    let (logits, tape) = net.forward(batch, 1.0, Mode::Eval, None)?;
    let out = softmax_cross_entropy(logits.view(), targets)?;
    // Undo the batch mean so every row carries its own sample's loss gradient.
    let dlogits = out.dlogits * m as f64;
    let (_, dzs) = net.backward_full(&tape, dlogits.view())?;
    let delta = if layer == net.num_hidden() {
        dlogits
    } else {
        dzs.into_iter().nth(layer).expect("hidden layer")
    };
    let input = &tape.inputs[layer];
    let (fan_in, fan_out) = net.layers[layer].weight.dim();
    let mut g = Array2::zeros((fan_in * fan_out, m));
    for i in 0..m {
        for a in 0..fan_in {
            let x = input[[i, a]];
            for b in 0..fan_out {
                g[[a * fan_out + b, i]] = x * delta[[i, b]];
            }
        }
    }
    Ok(g)
}

/// Fraction of hidden units whose derivative magnitude stays below `eps`
/// on every probe sample. Units are counted at the producer, so a CReLU pair
/// is one unit that is dead only if both branches are.
pub fn dead_unit_fraction(net: &Network, probes: &[ArrayView2<f64>], eps: f64) -> Result<f64> {
    if probes.iter().all(|p| p.nrows() == 0) {
        return Err(Error::Empty("dead-unit probe set".into()));
    }
    let widths: Vec<usize> = (0..net.num_hidden())
        .map(|l| net.spec.producer_width(l))
        .collect();
    let total: usize = widths.iter().sum();
    if total == 0 {
        return Ok(0.0);
    }
    let mut alive: Vec<Vec<bool>> = widths.iter().map(|&w| vec![false; w]).collect();
    for probe in probes.iter().filter(|p| p.nrows() > 0) {
        let (_, tape) = net.forward(*probe, 1.0, Mode::Eval, None)?;
        for (l, act_tape) in tape.act_tapes.iter().enumerate() {
            let mags = derivative_magnitudes(&net.spec.activations[l], &net.acts[l], act_tape)?;
            for (k, &d) in mags.iter().enumerate() {
                if d >= eps {
                    alive[l][k % widths[l]] = true;
                }
            }
        }
    }
    let dead = alive.iter().flatten().filter(|a| !**a).count();
    Ok(dead as f64 / total as f64)
}

/// Per hidden layer, the fraction of (sample, unit) pairs whose derivative
/// magnitude is below `eps` under pre-activation scaling `gamma`.
pub fn layer_saturation(net: &Network, batch: ArrayView2<f64>, gamma: f64, eps: f64) -> Result<Vec<f64>> {
    if batch.nrows() == 0 {
        return Err(Error::Empty("saturation batch".into()));
    }
    let (_, tape) = net.forward(batch, gamma, Mode::Eval, None)?;
    tape.act_tapes
        .iter()
        .enumerate()
        .map(|(l, t)| {
            let mags = derivative_magnitudes(&net.spec.activations[l], &net.acts[l], t)?;
            let sat = mags.iter().filter(|&&d| d < eps).count();
            Ok(sat as f64 / mags.len() as f64)
        })
        .collect()
}
