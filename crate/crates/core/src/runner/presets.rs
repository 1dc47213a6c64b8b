//! Hyper-parameter sweep grids and best-found settings per benchmark, as
//! activation specs.

use crate::activation::{ActivationKind as K, ActivationSpec, PreluScope, RationalTarget};
use crate::{Error, Result};

pub const LEAKY_ALPHAS: [f64; 12] = [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
pub const ELU_ALPHAS: [f64; 14] = [
    0.1, 0.5, 1.0, 1.5, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0, 3.3, 3.5, 3.6, 3.9,
];
pub const SELU_ALPHAS: [f64; 13] = [1.0, 1.3, 1.673, 2.0, 2.3, 2.4, 2.6, 2.8, 3.0, 3.1, 3.3, 3.5, 3.7];
pub const SWISH_GELU_BETAS: [f64; 6] = [0.01, 0.05, 0.1, 0.5, 0.8, 1.0];
pub const RRELU_BOUNDS: [(f64, f64); 20] = [
    (0.01, 0.05),
    (0.05, 0.10),
    (0.1, 0.3),
    (0.125, 0.333),
    (0.3, 1.0),
    (0.4, 1.0),
    (0.5, 1.0),
    (0.6, 1.0),
    (0.6, 0.8),
    (0.7, 1.0),
    (0.8, 1.0),
    (0.9, 1.0),
    (1.0, 1.5),
    (1.6732, 1.6732),
    (1.4232, 1.9232),
    (1.168, 2.178),
    (0.9232, 2.4232),
    (1.548, 1.798),
    (0.673, 2.673),
    (0.423, 2.923),
];
pub const RATIONAL_DEGREES: [(usize, usize); 3] = [(7, 6), (5, 4), (3, 2)];
pub const SMOOTH_LEAKY_CP: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];
pub const SMOOTH_LEAKY_ALPHAS: [f64; 7] = [0.1, 0.3, 0.5, 0.65, 0.7, 0.8, 0.9];
pub const RAND_SMOOTH_LEAKY_LOWER: [f64; 6] = [0.01, 0.3, 0.4, 0.5, 0.6, 0.7];
pub const RAND_SMOOTH_LEAKY_UPPER: [f64; 3] = [0.05, 0.8, 1.0];

/// Every setting of the sweep grid for `kind`. Randomized Smooth-Leaky pairs
/// with `l > u` are dropped; Rational covers version A only.
pub fn sweep_grid(kind: K) -> Vec<ActivationSpec> {
    let base = ActivationSpec::new(kind);
    match kind {
        K::Relu | K::Crelu | K::Sigmoid | K::Tanh => vec![base],
        K::LeakyRelu => LEAKY_ALPHAS
            .iter()
            .map(|&a| ActivationSpec::leaky_relu(a))
            .collect(),
        K::Elu | K::Celu => ELU_ALPHAS.iter().map(|&a| base.clone().with_alpha(a)).collect(),
        K::Selu => SELU_ALPHAS.iter().map(|&a| base.clone().with_alpha(a)).collect(),
        K::Swish | K::Gelu => SWISH_GELU_BETAS
            .iter()
            .map(|&b| base.clone().with_beta(b))
            .collect(),
        K::Rrelu | K::Rselu => RRELU_BOUNDS
            .iter()
            .map(|&(l, u)| base.clone().with_bounds(l, u))
            .collect(),
        K::Prelu | K::BoPrelu => [PreluScope::Global, PreluScope::Layer, PreluScope::Neuron]
            .iter()
            .map(|&s| base.clone().with_scope(s))
            .collect(),
        K::Rational => RATIONAL_DEGREES
            .iter()
            .flat_map(|&d| RationalTarget::ALL.iter().map(move |&t| (d, t)))
            .map(|(d, t)| base.clone().with_rational(d, t))
            .collect(),
        K::SmoothLeaky => smooth_leaky_grid(),
        K::RandSmoothLeaky => {
            let mut out = Vec::new();
            for &c in &SMOOTH_LEAKY_CP {
                for &p in &SMOOTH_LEAKY_CP {
                    for &l in &RAND_SMOOTH_LEAKY_LOWER {
                        for &u in &RAND_SMOOTH_LEAKY_UPPER {
                            if l <= u {
                                out.push(ActivationSpec::rand_smooth_leaky(l, u, c, p));
                            }
                        }
                    }
                }
            }
            out
        }
    }
}

/// The 175 (α, c, p) combinations of the Smooth-Leaky grid.
pub fn smooth_leaky_grid() -> Vec<ActivationSpec> {
    let mut out = Vec::with_capacity(175);
    for &a in &SMOOTH_LEAKY_ALPHAS {
        for &c in &SMOOTH_LEAKY_CP {
            for &p in &SMOOTH_LEAKY_CP {
                out.push(ActivationSpec::smooth_leaky(a, c, p));
            }
        }
    }
    out
}

/// Benchmarks with per-activation best settings.
pub const BENCHMARKS: [&str; 5] = [
    "permuted_mnist",
    "random_label_mnist",
    "random_label_cifar",
    "five_plus_one_cifar",
    "continual_imagenet",
];

/// Activations with tuned best settings, in canonical order.
pub const TUNED_ACTIVATIONS: [&str; 15] = [
    "relu",
    "leaky_relu",
    "sigmoid",
    "tanh",
    "rrelu",
    "prelu",
    "swish",
    "gelu",
    "celu",
    "elu",
    "selu",
    "crelu",
    "rational",
    "smooth_leaky",
    "rand_smooth_leaky",
];

/// Best (activation, learning rate) for one benchmark. Rational versions
/// other than A map to version A with the same degrees and target.
pub fn benchmark_best(benchmark: &str, activation: &str) -> Result<(ActivationSpec, f64)> {
    let b = BENCHMARKS.iter().position(|&n| n == benchmark).ok_or_else(|| {
        Error::config(format!(
            "unknown benchmark `{benchmark}`; known: {}",
            BENCHMARKS.join(", ")
        ))
    })?;
    let pick = |v: [f64; 5]| v[b];
    let spec_lr = match activation {
        "relu" => (ActivationSpec::new(K::Relu), pick([1e-3, 1e-4, 1e-4, 1e-4, 1e-4])),
        "leaky_relu" => (ActivationSpec::leaky_relu(pick([0.6, 0.8, 0.6, 0.4, 0.6])), 1e-3),
        "sigmoid" => (
            ActivationSpec::new(K::Sigmoid),
            pick([1e-3, 1e-3, 1e-3, 1e-4, 1e-3]),
        ),
        "tanh" => (ActivationSpec::new(K::Tanh), pick([1e-3, 1e-4, 1e-4, 1e-3, 1e-4])),
        "rrelu" => {
            let (l, u) = [(0.6, 0.8), (0.125, 0.333), (0.6, 0.8), (0.673, 2.673), (0.6, 0.8)][b];
            (ActivationSpec::new(K::Rrelu).with_bounds(l, u), 1e-3)
        }
        "prelu" => {
            let (scope, alpha) = [
                (PreluScope::Neuron, 1.2),
                (PreluScope::Neuron, 0.1),
                (PreluScope::Global, 0.65),
                (PreluScope::Global, 0.9),
                (PreluScope::Neuron, 0.65),
            ][b];
            (
                ActivationSpec::new(K::Prelu).with_scope(scope).with_alpha(alpha),
                pick([1e-3, 1e-3, 1e-4, 1e-4, 1e-3]),
            )
        }
        "swish" => (
            ActivationSpec::new(K::Swish).with_beta(pick([0.05, 0.01, 0.01, 0.1, 0.05])),
            pick([1e-3, 1e-3, 1e-4, 1e-3, 1e-3]),
        ),
        "gelu" => (
            ActivationSpec::new(K::Gelu).with_beta(pick([0.5, 0.8, 0.05, 1.0, 1.0])),
            pick([1e-3, 1e-3, 1e-3, 1e-4, 1e-3]),
        ),
        "celu" => (
            ActivationSpec::new(K::Celu).with_alpha(pick([3.6, 3.6, 2.0, 3.3, 3.3])),
            pick([1e-3, 1e-4, 1e-4, 1e-3, 1e-3]),
        ),
        "elu" => (
            ActivationSpec::new(K::Elu).with_alpha(pick([1.0, 3.6, 3.6, 3.6, 1.0])),
            pick([1e-3, 1e-4, 1e-4, 1e-3, 1e-3]),
        ),
        "selu" => (
            ActivationSpec::new(K::Selu).with_alpha(pick([1.0, 3.0, 3.7, 3.7, 3.7])),
            pick([1e-3, 1e-4, 1e-4, 1e-3, 1e-3]),
        ),
        "crelu" => (ActivationSpec::new(K::Crelu), 1e-3),
        "rational" => {
            let target = [
                RationalTarget::LeakyRelu,
                RationalTarget::Tanh,
                RationalTarget::Tanh,
                RationalTarget::Swish,
                RationalTarget::Relu,
            ][b];
            (
                ActivationSpec::new(K::Rational).with_rational((5, 4), target),
                pick([1e-3, 1e-4, 1e-3, 1e-3, 1e-3]),
            )
        }
        "smooth_leaky" => {
            let (c, p, a) = [
                (0.1, 0.3, 0.3),
                (0.3, 0.1, 0.3),
                (0.3, 0.5, 0.65),
                (0.1, 3.0, 0.9),
                (3.0, 2.0, 0.65),
            ][b];
            (ActivationSpec::smooth_leaky(a, c, p), 1e-3)
        }
        "rand_smooth_leaky" => {
            let (c, p, l, u) = [
                (0.8, 1.0, 0.3, 0.6),
                (2.0, 0.8, 0.3, 0.6),
                (0.8, 3.0, 0.5, 0.5),
                (0.5, 0.5, 0.673, 2.673),
                (0.5, 0.5, 0.3, 0.3),
            ][b];
            (ActivationSpec::rand_smooth_leaky(l, u, c, p), 1e-3)
        }
        other => {
            return Err(Error::config(format!(
                "no tuned setting for activation `{other}`; known: {}",
                TUNED_ACTIVATIONS.join(", ")
            )))
        }
    };
    Ok(spec_lr)
}

/// Best class-incremental Split-CIFAR setting (activation, learning rate).
pub fn class_incremental_best(activation: &str) -> Result<(ActivationSpec, f64)> {
    Ok(match activation {
        "relu" => (ActivationSpec::new(K::Relu), 1e-4),
        "leaky_relu" => (ActivationSpec::leaky_relu(0.7), 3e-4),
        "rrelu" => (ActivationSpec::new(K::Rrelu).with_bounds(0.673, 2.673), 3e-4),
        "prelu" => (ActivationSpec::new(K::Prelu).with_scope(PreluScope::Neuron), 1e-3),
        "swish" => (ActivationSpec::new(K::Swish).with_beta(0.05), 1e-4),
        "gelu" => (ActivationSpec::new(K::Gelu).with_beta(0.05), 1e-3),
        "celu" => (ActivationSpec::new(K::Celu).with_alpha(2.4), 1e-3),
        "elu" => (ActivationSpec::new(K::Elu).with_alpha(3.9), 1e-4),
        "selu" => (ActivationSpec::new(K::Selu).with_alpha(3.7), 1e-4),
        "tanh" => (ActivationSpec::new(K::Tanh), 1e-4),
        "sigmoid" => (ActivationSpec::new(K::Sigmoid), 1e-3),
        other => {
            return Err(Error::config(format!(
                "no class-incremental setting for `{other}`"
            )))
        }
    })
}
