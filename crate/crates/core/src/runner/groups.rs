//! Derivative-floor and sidedness groupings of activations.

use serde::{Deserialize, Serialize};

use crate::activation::{ActivationKind as K, ActivationSpec};

/// Minimum of the Smooth-Leaky kernel `g(x) = σ(x) + x σ(x)(1 − σ(x))`.
pub const SMOOTH_LEAKY_KERNEL_MIN: f64 = -0.099_839_320_128_866_92;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorClass {
    /// `inf |φ'| = 0` (hard dead zone or saturating tails).
    ZeroFloor,
    /// `φ' ≥ a > 0` on the whole negative branch.
    NonZeroFloor,
    /// Non-zero near the origin, decaying to 0 in the negative tail.
    EffectiveNonZeroFloor,
    Unclassified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    TwoSided,
    OneSidedKink,
    OneSidedSmooth,
    Unclassified,
}

impl FloorClass {
    pub fn name(self) -> &'static str {
        match self {
            FloorClass::ZeroFloor => "zero_floor",
            FloorClass::NonZeroFloor => "non_zero_floor",
            FloorClass::EffectiveNonZeroFloor => "effective_non_zero_floor",
            FloorClass::Unclassified => "unclassified",
        }
    }
}

impl Sidedness {
    pub fn name(self) -> &'static str {
        match self {
            Sidedness::TwoSided => "two_sided",
            Sidedness::OneSidedKink => "one_sided_kink",
            Sidedness::OneSidedSmooth => "one_sided_smooth",
            Sidedness::Unclassified => "unclassified",
        }
    }
}

/// Floor class at the spec's initial parameters. Learnable and randomized
/// slopes use their initial value and lower bound respectively.
pub fn floor_class(spec: &ActivationSpec) -> FloorClass {
    let strict = |floor: f64| {
        if floor > 0.0 {
            FloorClass::NonZeroFloor
        } else {
            FloorClass::ZeroFloor
        }
    };
    match spec.kind {
        K::Relu | K::Sigmoid | K::Tanh => FloorClass::ZeroFloor,
        K::LeakyRelu | K::Prelu => strict(spec.alpha.abs()),
        K::Rrelu | K::BoPrelu => strict(spec.bounds.0),
        K::SmoothLeaky => match strict(spec.alpha + (1.0 - spec.alpha) * SMOOTH_LEAKY_KERNEL_MIN) {
            FloorClass::ZeroFloor => FloorClass::EffectiveNonZeroFloor,
            c => c,
        },
        K::RandSmoothLeaky => match strict(spec.bounds.0 + (1.0 - spec.bounds.0) * SMOOTH_LEAKY_KERNEL_MIN) {
            FloorClass::ZeroFloor => FloorClass::EffectiveNonZeroFloor,
            c => c,
        },
        K::Elu | K::Celu | K::Selu | K::Gelu | K::Swish | K::Rselu => FloorClass::EffectiveNonZeroFloor,
        K::Crelu | K::Rational => FloorClass::Unclassified,
    }
}

/// Saturation sidedness: two saturating tails, or one negative-side
/// branch joined at the origin by a kink or smoothly.
pub fn sidedness(spec: &ActivationSpec) -> Sidedness {
    match spec.kind {
        K::Sigmoid | K::Tanh => Sidedness::TwoSided,
        K::Relu | K::LeakyRelu | K::Prelu | K::Rrelu | K::BoPrelu => Sidedness::OneSidedKink,
        K::Elu | K::Celu | K::Selu | K::Rselu | K::Gelu | K::Swish | K::SmoothLeaky | K::RandSmoothLeaky => {
            Sidedness::OneSidedSmooth
        }
        K::Crelu | K::Rational => Sidedness::Unclassified,
    }
}
