//! Closed-form scalar building blocks shared by the activation kinds.

use libm::erfc;

/// SELU scale λ.
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
/// SELU negative-branch α.
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`].
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `d/dt [t·σ(t)]`, the transition kernel of Swish and Smooth-Leaky.
#[inline]
pub fn swish_kernel(t: f64) -> f64 {
    let s = sigmoid(t);
    s + t * s * sigmoid(-t)
}

/// `σ'(x) = σ(x)·σ(−x)`, which stays non-zero far into both tails.
#[inline]
pub fn sigmoid_derivative(x: f64) -> f64 {
    sigmoid(x) * sigmoid(-x)
}

/// `tanh'(x) = sech²(x)`, computed without the `1 − tanh²` cancellation.
#[inline]
pub fn tanh_derivative(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

/// Standard normal CDF, accurate in both tails.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
