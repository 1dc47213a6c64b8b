//! Safe rational activations, `P(x) / (1 + |b_1 x + … + b_q x^q|)`.

use serde::{Deserialize, Serialize};

use super::scalar::sigmoid;
use crate::linalg;
use crate::{Error, Result};

/// Base function a rational activation is fitted to at initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RationalTarget {
    Relu,
    /// Leaky-ReLU with slope 0.01.
    LeakyRelu,
    /// Swish with β = 1.
    Swish,
    Tanh,
    Sigmoid,
}

impl RationalTarget {
    pub const ALL: [RationalTarget; 5] = [
        RationalTarget::Relu,
        RationalTarget::LeakyRelu,
        RationalTarget::Swish,
        RationalTarget::Tanh,
        RationalTarget::Sigmoid,
    ];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            RationalTarget::Relu => x.max(0.0),
            RationalTarget::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    0.01 * x
                }
            }
            RationalTarget::Swish => x * sigmoid(x),
            RationalTarget::Tanh => x.tanh(),
            RationalTarget::Sigmoid => sigmoid(x),
        }
    }
}

/// Numerator `a_0..a_p` and denominator `b_1..b_q` coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalCoeffs {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

/// Number of fit points and their range used at initialization.
pub const FIT_POINTS: usize = 1001;
pub const FIT_RANGE: (f64, f64) = (-3.0, 3.0);

impl RationalCoeffs {
    pub fn zeros(num_degree: usize, den_degree: usize) -> Self {
        RationalCoeffs {
            numerator: vec![0.0; num_degree + 1],
            denominator: vec![0.0; den_degree],
        }
    }

    pub fn len(&self) -> usize {
        self.numerator.len() + self.denominator.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn parts(&self, x: f64) -> Parts {
        let mut num = 0.0;
        let mut dnum = 0.0;
        let mut pow = 1.0;
        let mut prev = 0.0;
        for (k, &a) in self.numerator.iter().enumerate() {
            num += a * pow;
            if k > 0 {
                dnum += k as f64 * a * prev;
            }
            prev = pow;
            pow *= x;
        }
        let mut q = 0.0;
        let mut dq = 0.0;
        let mut pow = x;
        let mut prev = 1.0;
        for (j, &b) in self.denominator.iter().enumerate() {
            q += b * pow;
            dq += (j + 1) as f64 * b * prev;
            prev = pow;
            pow *= x;
        }
        Parts { num, dnum, q, dq }
    }

    /// Value and derivative at `x`. At a sign change of the inner denominator
    /// sum the subgradient `sign(0) = 0` is used.
    pub fn value_and_derivative(&self, x: f64) -> (f64, f64) {
        let Parts { num, dnum, q, dq } = self.parts(x);
        let d = 1.0 + q.abs();
        let s = sign(q);
        (num / d, dnum / d - num * s * dq / (d * d))
    }

    pub fn value(&self, x: f64) -> f64 {
        self.value_and_derivative(x).0
    }

    /// Accumulate `upstream · ∂y/∂θ` into `grad`, laid out as `[a_0..a_p, b_1..b_q]`.
    pub fn accumulate_param_grad(&self, x: f64, upstream: f64, grad: &mut [f64]) {
        let Parts { num, q, .. } = self.parts(x);
        let d = 1.0 + q.abs();
        let s = sign(q);
        let np = self.numerator.len();
        let mut pow = 1.0;
        for g in grad[..np].iter_mut() {
            *g += upstream * pow / d;
            pow *= x;
        }
        let mut pow = x;
        let factor = -upstream * num * s / (d * d);
        for g in grad[np..].iter_mut() {
            *g += factor * pow;
            pow *= x;
        }
    }

    /// Least-squares fit to `target` on [`FIT_POINTS`] uniform points of
    /// [`FIT_RANGE`], by Levenberg-Marquardt from the better of a linearized
    /// rational solve and a pure polynomial solve.
    pub fn fit(target: RationalTarget, num_degree: usize, den_degree: usize) -> Result<Self> {
        if num_degree < 1 {
            return Err(Error::config("rational numerator degree must be >= 1"));
        }
        let (lo, hi) = FIT_RANGE;
        let xs: Vec<f64> = (0..FIT_POINTS)
            .map(|i| lo + (hi - lo) * i as f64 / (FIT_POINTS - 1) as f64)
            .collect();
        let ys: Vec<f64> = xs.iter().map(|&x| target.eval(x)).collect();
        let np = num_degree + 1;
        let nparams = np + den_degree;

        let unpack = |theta: &[f64]| RationalCoeffs {
            numerator: theta[..np].to_vec(),
            denominator: theta[np..].to_vec(),
        };
        let cost = |theta: &[f64]| -> f64 {
            let c = unpack(theta);
            xs.iter().zip(&ys).map(|(&x, &y)| (c.value(x) - y).powi(2)).sum()
        };

        // Linearized start: P(x) - y·Q̃(x) = y, valid where 1 + Q̃ > 0.
        let linearized = least_squares(
            &xs,
            |x, row| {
                let y = target.eval(x);
                let mut pow = 1.0;
                for r in row[..np].iter_mut() {
                    *r = pow;
                    pow *= x;
                }
                let mut pow = x;
                for r in row[np..].iter_mut() {
                    *r = -y * pow;
                    pow *= x;
                }
                y
            },
            nparams,
        );
        let polynomial = least_squares(
            &xs,
            |x, row| {
                let mut pow = 1.0;
                for r in row[..np].iter_mut() {
                    *r = pow;
                    pow *= x;
                }
                for r in row[np..].iter_mut() {
                    *r = 0.0;
                }
                target.eval(x)
            },
            nparams,
        )
        .map(|mut t| {
            t[np..].iter_mut().for_each(|v| *v = 0.0);
            t
        });

        let mut theta = match (linearized, polynomial) {
            (Some(a), Some(b)) => {
                if cost(&a) <= cost(&b) {
                    a
                } else {
                    b
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => vec![0.0; nparams],
        };

        let mut current = cost(&theta);
        let mut lambda = 1e-3;
        let mut jac = vec![0.0; nparams];
        for _ in 0..500 {
            let coeffs = unpack(&theta);
            let mut jtj = vec![0.0; nparams * nparams];
            let mut jtr = vec![0.0; nparams];
            for (&x, &y) in xs.iter().zip(&ys) {
                jac.iter_mut().for_each(|v| *v = 0.0);
                coeffs.accumulate_param_grad(x, 1.0, &mut jac);
                let r = coeffs.value(x) - y;
                for i in 0..nparams {
                    jtr[i] += jac[i] * r;
                    for j in 0..nparams {
                        jtj[i * nparams + j] += jac[i] * jac[j];
                    }
                }
            }
            let mut damped = jtj.clone();
            for i in 0..nparams {
                damped[i * nparams + i] += lambda * (jtj[i * nparams + i] + 1e-12);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(step) = linalg::solve(damped, rhs) else {
                lambda *= 10.0;
                if lambda > 1e12 {
                    break;
                }
                continue;
            };
            let candidate: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + s).collect();
            let c = cost(&candidate);
            if c < current {
                let improvement = current - c;
                theta = candidate;
                current = c;
                lambda *= 0.3;
                if improvement < 1e-15 * current.max(1e-300) {
                    break;
                }
            } else {
                lambda *= 10.0;
                if lambda > 1e12 {
                    break;
                }
            }
        }
        Ok(unpack(&theta))
    }

    /// Largest absolute deviation from `target` on the fit grid.
    pub fn max_fit_error(&self, target: RationalTarget) -> f64 {
        let (lo, hi) = FIT_RANGE;
        (0..FIT_POINTS)
            .map(|i| lo + (hi - lo) * i as f64 / (FIT_POINTS - 1) as f64)
            .map(|x| (self.value(x) - target.eval(x)).abs())
            .fold(0.0, f64::max)
    }
}

struct Parts {
    num: f64,
    dnum: f64,
    q: f64,
    dq: f64,
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Ordinary least squares via normal equations; `row_fn` fills a design row
/// and returns the response.
fn least_squares(xs: &[f64], mut row_fn: impl FnMut(f64, &mut [f64]) -> f64, n: usize) -> Option<Vec<f64>> {
    let mut ata = vec![0.0; n * n];
    let mut atb = vec![0.0; n];
    let mut row = vec![0.0; n];
    for &x in xs {
        let y = row_fn(x, &mut row);
        for i in 0..n {
            atb[i] += row[i] * y;
            for j in 0..n {
                ata[i * n + j] += row[i] * row[j];
            }
        }
    }
    // Columns that are identically zero would make the system singular.
    for i in 0..n {
        if ata[i * n + i] == 0.0 {
            ata[i * n + i] = 1.0;
        }
    }
    linalg::solve(ata, atb)
}
