use ndarray::ArrayView2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::symmetric_eigenvalues;
use crate::net::Network;
use crate::seed::{self, tag};
use crate::{Error, Result};

/// Smallest `k` such that the top `k` eigenvalues of `GᵀG` carry at least
/// fraction `tau` of its trace. An all-zero `G` has rank 0.
pub fn effective_rank(g: ArrayView2<f64>, tau: f64) -> Result<usize> {
    let m = g.ncols();
    if m == 0 {
        return Err(Error::Empty("effective rank of a matrix with no columns".into()));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::config(format!("tau must lie in (0, 1] (got {tau})")));
    }
    if let Some(v) = g.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            location: "effective_rank input".into(),
            value: *v,
        });
    }
    let gram = g.t().dot(&g);
    let eig: Vec<f64> = symmetric_eigenvalues(gram.iter().copied().collect(), m)
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let total: f64 = eig.iter().sum();
    if total == 0.0 {
        log::warn!("effective rank of an all-zero gradient matrix is defined as 0");
        return Ok(0);
    }
    let mut acc = 0.0;
    for (k, v) in eig.iter().enumerate() {
        acc += v;
        if acc / total >= tau {
            return Ok(k + 1);
        }
    }
    Ok(m)
}

/// Result of [`lambda_max`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerIteration {
    /// Rayleigh quotient on the final direction; carries the eigenvalue's sign.
    pub lambda: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the operator mapped the iterate to zero.
    pub zero_operator: bool,
}

/// Power iteration for the dominant-magnitude eigenpair of a symmetric
/// operator given as a matrix-vector product.
pub fn lambda_max(
    mut hvp: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    dim: usize,
    iters: usize,
    tol: f64,
    seed_value: u64,
) -> Result<PowerIteration> {
    if dim == 0 {
        return Err(Error::Empty(
            "power iteration on a zero-dimensional operator".into(),
        ));
    }
    let mut rng = seed::rng(seed_value, &[tag::CURVATURE]);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);
    let mut lambda = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;
    let mut hv = hvp(&v)?;
    for it in 0..iters {
        iterations = it + 1;
        check_len(&hv, dim)?;
        let rq = dot(&v, &hv);
        let norm = dot(&hv, &hv).sqrt();
        if norm == 0.0 {
            log::warn!("power iteration: operator annihilated the iterate; lambda reported as 0");
            return Ok(PowerIteration {
                lambda: 0.0,
                vector: v,
                iterations,
                converged: false,
                zero_operator: true,
            });
        }
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                location: format!("power iteration step {iterations}"),
                value: norm,
            });
        }
        let done = (rq - lambda).abs() < tol;
        lambda = rq;
        if done {
            converged = true;
            break;
        }
        v = hv.iter().map(|x| x / norm).collect();
        hv = hvp(&v)?;
    }
    if !converged {
        log::warn!("power iteration did not converge within {iters} iterations");
    }
    Ok(PowerIteration {
        lambda,
        vector: v,
        iterations,
        converged,
        zero_operator: false,
    })
}

/// Hessian-vector product of the mean cross-entropy by central differences
/// of the gradient along `v`.
pub fn network_hvp(
    net: &Network,
    batch: ArrayView2<f64>,
    targets: &[usize],
    v: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    let theta = net.flat_params();
    check_len(v, theta.len())?;
    let mut probe = net.clone();
    let shifted = |sign: f64| {
        theta
            .iter()
            .zip(v)
            .map(|(t, d)| t + sign * step * d)
            .collect::<Vec<_>>()
    };
    probe.set_flat_params(&shifted(1.0))?;
    let (_, gp) = probe.loss_and_flat_gradient(batch, targets)?;
    probe.set_flat_params(&shifted(-1.0))?;
    let (_, gm) = probe.loss_and_flat_gradient(batch, targets)?;
    Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * step)).collect())
}

/// Dominant loss-Hessian eigenvalue of `net` on one batch.
pub fn network_lambda_max(
    net: &Network,
    batch: ArrayView2<f64>,
    targets: &[usize],
    iters: usize,
    tol: f64,
    seed_value: u64,
) -> Result<PowerIteration> {
    lambda_max(
        |v| network_hvp(net, batch, targets, v, 1e-4),
        net.num_params(),
        iters,
        tol,
        seed_value,
    )
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn check_len(v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::config(format!(
            "vector of length {} where {dim} expected",
            v.len()
        )));
    }
    Ok(())
}
