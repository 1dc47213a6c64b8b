use plasticity::activation::{ActivationKind, ActivationSpec};
use plasticity::props::{
    canonical_specs, dead_band_width, effective_negative_slope, property_grid, PropertyGrid,
    SlopeDistribution, DBW_EPS, DBW_GRID, DBW_RANGE,
};
use proptest::prelude::*;

const T: bool = true;
const F: bool = false;

/// Reference property table, columns: HDZ, NZG, Sat±, Sat−, C¹, NonM, SelfN, L/R, f''.
fn reference_row(name: &str) -> [bool; 9] {
    match name {
        "ReLU" => [T, F, F, T, F, F, F, F, F],
        "LeakyReLU" => [F, T, F, F, F, F, F, F, F],
        "PReLU" => [F, T, F, F, F, F, F, T, F],
        "RReLU" => [F, T, F, F, F, F, F, T, F],
        "Sigmoid" => [F, T, T, T, T, F, F, F, T],
        "Tanh" => [F, T, T, T, T, F, F, F, T],
        "Swish" => [F, T, F, F, T, T, F, F, T],
        "GeLU" => [F, T, F, F, T, T, F, F, T],
        "ELU" => [F, T, F, T, T, F, F, F, T],
        "CELU" => [F, T, F, T, T, F, F, F, T],
        "SELU" => [F, T, F, T, F, F, T, F, T],
        "CReLU" => [T, T, F, F, F, F, F, F, F],
        "Rational" => [F, T, F, F, T, T, F, F, T],
        "Smooth-Leaky" => [F, T, F, F, T, T, F, F, T],
        "Rand. Smooth-Leaky" => [F, T, F, F, T, T, F, T, T],
        "RSELU" => [F, T, F, T, F, F, T, T, T],
        "Bo-PReLU" => [F, T, F, F, F, F, F, T, F],
        other => panic!("no reference row for {other}"),
    }
}

#[test]
fn property_grid_matches_reference_table() {
    let mut mismatches = Vec::new();
    for (name, spec) in canonical_specs() {
        let got = property_grid(&spec, None).unwrap().flags();
        let want = reference_row(name);
        for (i, col) in PropertyGrid::COLUMNS.iter().enumerate() {
            if got[i] != want[i] {
                mismatches.push(format!("{name}.{col}: got {} want {}", got[i], want[i]));
            }
        }
    }
    assert!(mismatches.is_empty(), "{mismatches:#?}");
}

#[test]
fn smooth_leaky_monotonicity_threshold() {
    let low = property_grid(&ActivationSpec::smooth_leaky(0.05, 5.0, 3.0), None).unwrap();
    let high = property_grid(&ActivationSpec::smooth_leaky(0.3, 5.0, 3.0), None).unwrap();
    assert!(low.non_monotonic);
    assert!(!high.non_monotonic);
}

fn dbw(spec: &ActivationSpec) -> f64 {
    dead_band_width(spec, None, DBW_RANGE, DBW_EPS, DBW_GRID).unwrap()
}

/// Fraction of the [-100, 100] range outside `±x*`.
fn outside(x_star: f64) -> f64 {
    (100.0 - x_star) / 100.0
}

#[test]
fn dead_band_widths_match_closed_forms() {
    assert!((dbw(&ActivationSpec::new(ActivationKind::Relu)) - 0.5).abs() <= 5e-6);
    for alpha in [0.01, 0.3, 0.7, 1.0] {
        assert_eq!(dbw(&ActivationSpec::leaky_relu(alpha)), 0.0);
    }
    // σ'(x) = 1e-3  ⇔  σ(x) = (1 + sqrt(1 - 4e-3)) / 2.
    let s = (1.0 + (1.0f64 - 4e-3).sqrt()) / 2.0;
    let sigmoid_star = (s / (1.0 - s)).ln();
    let sig = dbw(&ActivationSpec::new(ActivationKind::Sigmoid));
    assert!((sig - outside(sigmoid_star)).abs() < 1e-4, "{sig}");
    assert!((sig - 0.93093).abs() < 1e-4);
    // sech²(x) = 1e-3  ⇔  cosh(x) = sqrt(1000).
    let tanh_star = (1000.0f64).sqrt().acosh();
    let th = dbw(&ActivationSpec::new(ActivationKind::Tanh));
    assert!((th - outside(tanh_star)).abs() < 1e-4, "{th}");
    assert!((th - 0.95854).abs() < 1e-4);
}

#[test]
fn dead_band_grid_refinement_is_stable() {
    for spec in [
        ActivationSpec::new(ActivationKind::Sigmoid),
        ActivationSpec::new(ActivationKind::Tanh),
        ActivationSpec::new(ActivationKind::Relu),
    ] {
        let n = 20_001;
        let coarse = dead_band_width(&spec, None, DBW_RANGE, DBW_EPS, n).unwrap();
        let fine = dead_band_width(&spec, None, DBW_RANGE, DBW_EPS, 2 * n - 1).unwrap();
        assert!((coarse - fine).abs() < 2.0 / n as f64, "{}", spec.label());
    }
}

/// Composite trapezoid over [-10, 0) with `n` points, an independent check on
/// the adaptive quadrature.
fn trapezoid_slope(spec: &ActivationSpec, n: usize) -> f64 {
    let probe = plasticity::activation::Probe::new(spec, None).unwrap();
    let pdf = |x: f64| (-0.5 * x * x).exp();
    let h = 10.0 / (n - 1) as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        let x = -10.0 + h * i as f64;
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        num += w * probe.derivative(x) * pdf(x);
        den += w * pdf(x);
    }
    num / den
}

#[test]
fn smooth_leaky_effective_slope_against_trapezoid_oracle() {
    let spec = ActivationSpec::smooth_leaky(0.1, 5.0, 3.0);
    let oracle = trapezoid_slope(&spec, 10_001);
    let got = effective_negative_slope(&spec, None, SlopeDistribution::default()).unwrap();
    assert!((got - oracle).abs() < 1e-5, "{got} vs {oracle}");
    // Frozen high-precision value of the same integral.
    assert!((got - 0.187_132_894_855_578_36).abs() < 1e-10);
}

proptest! {
    #[test]
    fn dead_band_is_monotone_in_threshold(e1 in 1e-6f64..1e-1, e2 in 1e-6f64..1e-1) {
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        for kind in [ActivationKind::Sigmoid, ActivationKind::Tanh, ActivationKind::Gelu, ActivationKind::Elu] {
            let spec = ActivationSpec::new(kind);
            let a = dead_band_width(&spec, None, DBW_RANGE, lo, 2_001).unwrap();
            let b = dead_band_width(&spec, None, DBW_RANGE, hi, 2_001).unwrap();
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn linear_leak_effective_slope_is_exact(alpha in 0.0f64..1.2) {
        let spec = ActivationSpec::leaky_relu(alpha);
        for dist in [SlopeDistribution::default(), SlopeDistribution::uniform_default()] {
            let s = effective_negative_slope(&spec, None, dist).unwrap();
            prop_assert!((s - alpha).abs() <= 4.0 * f64::EPSILON * alpha.max(1.0));
        }
    }
}
