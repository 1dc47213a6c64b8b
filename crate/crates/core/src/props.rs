//! Analytic shape descriptors: effective negative slope, dead-band width and
//! the binary property grid.

use serde::{Deserialize, Serialize};

use crate::activation::scalar::norm_pdf;
use crate::activation::{ActivationKind, ActivationSpec, ActivationState, Probe, RationalTarget};
use crate::{Error, Result};

/// Measure over `x < 0` used to average `φ'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SlopeDistribution {
    /// Standard normal restricted to `x < 0`.
    #[default]
    TruncatedStandardNormalNegative,
    /// Uniform on `[a, b)` with `b <= 0`.
    UniformNegative { a: f64, b: f64 },
}

impl SlopeDistribution {
    pub fn uniform_default() -> Self {
        SlopeDistribution::UniformNegative { a: -3.0, b: 0.0 }
    }
}

/// Lower end of the integration range for the effective slope.
pub const SLOPE_TRUNCATION: f64 = -10.0;

/// Expected derivative `E[φ'(x)]` over the negative half-line under `dist`,
/// truncated to `[-10, 0)`. Randomized kinds use their Eval midpoint slope.
pub fn effective_negative_slope(
    spec: &ActivationSpec,
    state: Option<&ActivationState>,
    dist: SlopeDistribution,
) -> Result<f64> {
    let probe = Probe::new(spec, state)?;
    effective_negative_slope_of(&probe, dist)
}

pub fn effective_negative_slope_of(probe: &Probe, dist: SlopeDistribution) -> Result<f64> {
    let (lo, hi, weight): (f64, f64, fn(f64) -> f64) = match dist {
        SlopeDistribution::TruncatedStandardNormalNegative => (SLOPE_TRUNCATION, 0.0, norm_pdf),
        SlopeDistribution::UniformNegative { a, b } => {
            if !(a < b && b <= 0.0) {
                return Err(Error::config(format!(
                    "uniform slope distribution needs a < b <= 0 (got [{a}, {b}))"
                )));
            }
            (a.max(SLOPE_TRUNCATION), b, |_| 1.0)
        }
    };
    if lo >= hi {
        return Err(Error::config("slope distribution has no mass in [-10, 0)"));
    }
    let [num, den] = adaptive_gauss_kronrod(
        |x| {
            let w = weight(x);
            [probe.derivative(x) * w, w]
        },
        lo,
        hi,
        1e-13,
    );
    Ok(num / den)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod-15 and Gauss-7 estimates of a pair of integrals on `[a, b]`.
fn gk15(f: &impl Fn(f64) -> [f64; 2], a: f64, b: f64) -> ([f64; 2], [f64; 2]) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = [0.0; 2];
    let mut g = [0.0; 2];
    for (i, (&node, &wk)) in GK_NODES.iter().zip(&GK_WEIGHTS).enumerate() {
        let pts: &[f64] = if node == 0.0 { &[0.0] } else { &[-1.0, 1.0] };
        for &s in pts {
            let v = f(c + s * h * node);
            for j in 0..2 {
                k[j] += wk * v[j];
                if i % 2 == 1 {
                    g[j] += GAUSS_WEIGHTS[i / 2] * v[j];
                }
            }
        }
    }
    (k.map(|v| v * h), g.map(|v| v * h))
}

/// Globally adaptive bisection until every interval's Kronrod-Gauss gap is
/// below `tol` times the running magnitude of the integrals.
fn adaptive_gauss_kronrod(f: impl Fn(f64) -> [f64; 2], a: f64, b: f64, tol: f64) -> [f64; 2] {
    let (whole, _) = gk15(&f, a, b);
    let scale = whole[0].abs().max(whole[1].abs()).max(f64::MIN_POSITIVE);
    let mut total = [0.0; 2];
    let mut stack = vec![(a, b, 0u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (k, g) = gk15(&f, lo, hi);
        let err = (k[0] - g[0]).abs().max((k[1] - g[1]).abs());
        if err <= tol * scale * (hi - lo) / (b - a) || depth >= 40 {
            total[0] += k[0];
            total[1] += k[1];
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    total
}

/// Default grid for [`dead_band_width`].
pub const DBW_RANGE: (f64, f64) = (-100.0, 100.0);
pub const DBW_EPS: f64 = 1e-3;
pub const DBW_GRID: usize = 200_001;

/// Fraction of a uniform grid over `range` where the largest branch derivative
/// magnitude is below `eps`.
pub fn dead_band_width(
    spec: &ActivationSpec,
    state: Option<&ActivationState>,
    range: (f64, f64),
    eps: f64,
    grid_n: usize,
) -> Result<f64> {
    let probe = Probe::new(spec, state)?;
    dead_band_width_of(&probe, range, eps, grid_n)
}

pub fn dead_band_width_of(probe: &Probe, range: (f64, f64), eps: f64, grid_n: usize) -> Result<f64> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::config(format!(
            "dead-band threshold must be positive (got {eps})"
        )));
    }
    if grid_n < 2 || range.0 >= range.1 {
        return Err(Error::config(
            "dead-band grid needs at least two points on a non-empty range",
        ));
    }
    let step = (range.1 - range.0) / (grid_n - 1) as f64;
    let dead = (0..grid_n)
        .filter(|&i| probe.derivative_magnitude(range.0 + step * i as f64) < eps)
        .count();
    Ok(dead as f64 / grid_n as f64)
}

/// Binary shape properties, in table column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyGrid {
    /// Hard dead zone: `φ' = 0` on an open negative interval.
    pub hdz: bool,
    /// Non-zero gradient for almost all `x < 0`.
    pub nzg: bool,
    /// Both tails saturate.
    pub sat_both: bool,
    /// Negative tail saturates.
    pub sat_neg: bool,
    /// Continuous first derivative at the origin.
    pub c1: bool,
    pub non_monotonic: bool,
    /// Declared, not computed.
    pub self_normalizing: bool,
    /// Declared, not computed.
    pub learnable_or_random_slope: bool,
    pub nonzero_second_derivative: bool,
}

impl PropertyGrid {
    pub const COLUMNS: [&'static str; 9] = [
        "hdz",
        "nzg",
        "sat_both",
        "sat_neg",
        "c1",
        "non_monotonic",
        "self_normalizing",
        "learnable_or_random_slope",
        "nonzero_second_derivative",
    ];

    pub fn flags(&self) -> [bool; 9] {
        [
            self.hdz,
            self.nzg,
            self.sat_both,
            self.sat_neg,
            self.c1,
            self.non_monotonic,
            self.self_normalizing,
            self.learnable_or_random_slope,
            self.nonzero_second_derivative,
        ]
    }

    /// The numerically computed columns (everything except the two declared ones).
    pub fn computed_flags(&self) -> [bool; 7] {
        [
            self.hdz,
            self.nzg,
            self.sat_both,
            self.sat_neg,
            self.c1,
            self.non_monotonic,
            self.nonzero_second_derivative,
        ]
    }
}

/// Probe settings used by [`property_grid`].
pub mod probe_settings {
    /// Stand-in for ±∞ when testing tail saturation.
    pub const TAIL_X: f64 = 50.0;
    pub const TAIL_TOL: f64 = 1e-9;
    /// Negative probe grid for HDZ/NZG: `[-50, 0)`.
    pub const NEG_POINTS: usize = 5_000;
    /// Fraction of non-zero derivatives required for NZG.
    pub const NZG_FRACTION: f64 = 0.99;
    /// Step and tolerance of the one-sided derivative comparison at 0.
    pub const C1_STEP: f64 = 1e-5;
    pub const C1_TOL: f64 = 1e-6;
    /// Grid on `[-10, 10]` for monotonicity and curvature.
    pub const SHAPE_POINTS: usize = 4_001;
    pub const SECOND_DIFF_STEP: f64 = 1e-4;
    pub const SECOND_DIFF_TOL: f64 = 1e-6;
}

/// Compute the property grid of an activation numerically.
pub fn property_grid(spec: &ActivationSpec, state: Option<&ActivationState>) -> Result<PropertyGrid> {
    use probe_settings::*;
    let probe = Probe::new(spec, state)?;

    // HDZ / NZG on a negative grid.
    let neg: Vec<f64> = (0..NEG_POINTS)
        .map(|i| -TAIL_X + TAIL_X * i as f64 / NEG_POINTS as f64)
        .collect();
    let mut hdz = false;
    let mut run = [0usize; 2];
    let mut nonzero = 0usize;
    for &x in &neg {
        let (a, b) = probe.branch_derivatives(x);
        for (slot, d) in [Some(a), b].into_iter().enumerate() {
            match d {
                Some(0.0) => {
                    run[slot] += 1;
                    hdz |= run[slot] >= 2;
                }
                _ => run[slot] = 0,
            }
        }
        if probe.derivative_magnitude(x) != 0.0 {
            nonzero += 1;
        }
    }
    let nzg = nonzero as f64 >= NZG_FRACTION * neg.len() as f64;

    let sat_neg = probe.derivative_magnitude(-TAIL_X) < TAIL_TOL;
    let sat_both = sat_neg && probe.derivative_magnitude(TAIL_X) < TAIL_TOL;

    // One-sided second-order differences of the (positive-branch) value at 0.
    let h = C1_STEP;
    let f = |x: f64| probe.value(x);
    let left = (3.0 * f(0.0) - 4.0 * f(-h) + f(-2.0 * h)) / (2.0 * h);
    let right = (-3.0 * f(0.0) + 4.0 * f(h) - f(2.0 * h)) / (2.0 * h);
    let c1 = (left - right).abs() < C1_TOL;

    let grid: Vec<f64> = (0..SHAPE_POINTS)
        .map(|i| -10.0 + 20.0 * i as f64 / (SHAPE_POINTS - 1) as f64)
        .collect();
    let derivs: Vec<f64> = grid.iter().map(|&x| probe.derivative(x)).collect();
    let non_monotonic = derivs.iter().any(|&d| d > 0.0) && derivs.iter().any(|&d| d < 0.0);

    let s = SECOND_DIFF_STEP;
    let nonzero_second_derivative = grid.iter().filter(|x| x.abs() > 2.0 * s).any(|&x| {
        let (dp, _) = probe.branch_derivatives(x + s);
        let (dm, _) = probe.branch_derivatives(x - s);
        ((dp - dm) / (2.0 * s)).abs() > SECOND_DIFF_TOL
    });

    use ActivationKind as K;
    let kind = spec.kind;
    Ok(PropertyGrid {
        hdz,
        nzg,
        sat_both,
        sat_neg,
        c1,
        non_monotonic,
        self_normalizing: matches!(kind, K::Selu | K::Rselu),
        learnable_or_random_slope: matches!(
            kind,
            K::Prelu | K::Rrelu | K::RandSmoothLeaky | K::BoPrelu | K::Rselu
        ),
        nonzero_second_derivative,
    })
}

/// One parameterization per property-table row, chosen so every computed flag
/// is decided by the shape family rather than by a borderline setting.
///
/// Smooth-tailed Swish/GeLU use moderate β so their non-monotonic dip lies in
/// `[-10, 10]` while the tail at −50 is still above the saturation probe;
/// Smooth-Leaky uses α = 0.05 (below 1/11, where the derivative can dip
/// negative).
pub fn canonical_specs() -> Vec<(&'static str, ActivationSpec)> {
    use ActivationKind as K;
    vec![
        ("ReLU", ActivationSpec::new(K::Relu)),
        ("LeakyReLU", ActivationSpec::leaky_relu(0.01)),
        ("PReLU", ActivationSpec::new(K::Prelu)),
        ("RReLU", ActivationSpec::new(K::Rrelu)),
        ("Sigmoid", ActivationSpec::new(K::Sigmoid)),
        ("Tanh", ActivationSpec::new(K::Tanh)),
        ("Swish", ActivationSpec::new(K::Swish).with_beta(0.25)),
        ("GeLU", ActivationSpec::new(K::Gelu).with_beta(0.1)),
        ("ELU", ActivationSpec::new(K::Elu).with_alpha(1.0)),
        ("CELU", ActivationSpec::new(K::Celu).with_alpha(1.0)),
        ("SELU", ActivationSpec::new(K::Selu)),
        ("CReLU", ActivationSpec::new(K::Crelu)),
        (
            "Rational",
            ActivationSpec::new(K::Rational).with_rational((5, 4), RationalTarget::LeakyRelu),
        ),
        ("Smooth-Leaky", ActivationSpec::smooth_leaky(0.05, 5.0, 3.0)),
        (
            "Rand. Smooth-Leaky",
            ActivationSpec::rand_smooth_leaky(0.01, 0.05, 5.0, 3.0),
        ),
        ("RSELU", ActivationSpec::new(K::Rselu)),
        ("Bo-PReLU", ActivationSpec::new(K::BoPrelu)),
    ]
}

/// All analytic descriptors of one activation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeSummary {
    pub label: String,
    pub spec: ActivationSpec,
    pub effective_slope_normal: f64,
    pub effective_slope_uniform: f64,
    pub dead_band_width: f64,
    pub grid: PropertyGrid,
}

pub fn shape_summary(label: impl Into<String>, spec: &ActivationSpec) -> Result<ShapeSummary> {
    let probe = Probe::new(spec, None)?;
    Ok(ShapeSummary {
        label: label.into(),
        spec: spec.clone(),
        effective_slope_normal: effective_negative_slope_of(
            &probe,
            SlopeDistribution::TruncatedStandardNormalNegative,
        )?,
        effective_slope_uniform: effective_negative_slope_of(&probe, SlopeDistribution::uniform_default())?,
        dead_band_width: dead_band_width_of(&probe, DBW_RANGE, DBW_EPS, DBW_GRID)?,
        grid: property_grid(spec, None)?,
    })
}

/// Write one row per activation with one 0/1 column per property.
pub fn write_property_csv<W: std::io::Write>(rows: &[(String, PropertyGrid)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["activation"];
    header.extend(PropertyGrid::COLUMNS);
    let to_err = |e: csv::Error| Error::config(format!("csv write failed: {e}"));
    w.write_record(&header).map_err(to_err)?;
    for (name, grid) in rows {
        let mut rec = vec![name.clone()];
        rec.extend(grid.flags().iter().map(|&b| u8::from(b).to_string()));
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush()
        .map_err(|e| Error::config(format!("csv flush failed: {e}")))?;
    Ok(())
}
