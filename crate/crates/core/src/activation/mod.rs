//! The activation zoo: value/derivative pairs for every nonlinearity, with
//! learnable (PReLU, Bo-PReLU, Rational) and randomized (RReLU,
//! Randomized Smooth-Leaky, RSELU) parameters.
//!
//! Kinked kinds use the left derivative at `x = 0`, i.e. `φ'(0)` equals the
//! negative-branch slope.

pub mod rational;
pub mod scalar;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use rational::{RationalCoeffs, RationalTarget};
pub use scalar::{SELU_ALPHA, SELU_LAMBDA};

use crate::seed::Rng;
use crate::{Error, Result};
use scalar::{norm_cdf, norm_pdf, sigmoid, sigmoid_derivative, swish_kernel, tanh_derivative};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    LeakyRelu,
    Prelu,
    Rrelu,
    Sigmoid,
    Tanh,
    Swish,
    Gelu,
    Elu,
    Celu,
    Selu,
    Crelu,
    Rational,
    SmoothLeaky,
    RandSmoothLeaky,
    BoPrelu,
    Rselu,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 17] = [
        ActivationKind::Relu,
        ActivationKind::LeakyRelu,
        ActivationKind::Prelu,
        ActivationKind::Rrelu,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Swish,
        ActivationKind::Gelu,
        ActivationKind::Elu,
        ActivationKind::Celu,
        ActivationKind::Selu,
        ActivationKind::Crelu,
        ActivationKind::Rational,
        ActivationKind::SmoothLeaky,
        ActivationKind::RandSmoothLeaky,
        ActivationKind::BoPrelu,
        ActivationKind::Rselu,
    ];

    /// Config name, e.g. `leaky_relu`.
    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "leaky_relu",
            ActivationKind::Prelu => "prelu",
            ActivationKind::Rrelu => "rrelu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Swish => "swish",
            ActivationKind::Gelu => "gelu",
            ActivationKind::Elu => "elu",
            ActivationKind::Celu => "celu",
            ActivationKind::Selu => "selu",
            ActivationKind::Crelu => "crelu",
            ActivationKind::Rational => "rational",
            ActivationKind::SmoothLeaky => "smooth_leaky",
            ActivationKind::RandSmoothLeaky => "rand_smooth_leaky",
            ActivationKind::BoPrelu => "bo_prelu",
            ActivationKind::Rselu => "rselu",
        }
    }

    /// Kinds whose negative slope is resampled per element in training.
    pub fn is_randomized(self) -> bool {
        matches!(
            self,
            ActivationKind::Rrelu | ActivationKind::RandSmoothLeaky | ActivationKind::Rselu
        )
    }

    /// Kinds carrying trainable activation parameters.
    pub fn is_learnable(self) -> bool {
        matches!(
            self,
            ActivationKind::Prelu | ActivationKind::BoPrelu | ActivationKind::Rational
        )
    }

    /// Kinds that may be non-differentiable at the origin (depending on
    /// their parameters).
    pub fn is_kinked(self) -> bool {
        matches!(
            self,
            ActivationKind::Relu
                | ActivationKind::LeakyRelu
                | ActivationKind::Prelu
                | ActivationKind::Rrelu
                | ActivationKind::Crelu
                | ActivationKind::BoPrelu
                | ActivationKind::Elu
                | ActivationKind::Selu
                | ActivationKind::Rselu
        )
    }
}

impl std::fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown activation kind `{s}`")))
    }
}

/// Compact form `kind` or `kind:key=value,...` using the config-file keys,
/// e.g. `leaky_relu:alpha=0.6` or `rrelu:lower=0.1,upper=0.3`.
impl std::str::FromStr for ActivationSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut table = toml::Table::new();
        table.insert("kind".into(), toml::Value::String(kind.trim().into()));
        for pair in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::config(format!("expected key=value in `{s}`, got `{pair}`")))?;
            let v = v.trim();
            let value = if let Ok(i) = v.parse::<i64>() {
                toml::Value::Integer(i)
            } else if let Ok(f) = v.parse::<f64>() {
                toml::Value::Float(f)
            } else {
                toml::Value::String(v.to_string())
            };
            table.insert(k.trim().into(), value);
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(format!("activation `{s}`: {}", e.message().trim())))
    }
}

/// Granularity of a learnable slope. `Global` shares one value across every
/// layer of a network; the network ties the per-layer copies together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreluScope {
    Global,
    Layer,
    Neuron,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RationalVersion {
    #[serde(rename = "a", alias = "A")]
    A,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Shape of a nonlinearity. Fields that do not apply to `kind` hold neutral
/// defaults and are ignored everywhere.
///
/// | kind | fields used |
/// |---|---|
/// | `leaky_relu` | `alpha` (slope) |
/// | `prelu` | `alpha` (initial slope), `scope` |
/// | `rrelu`, `rselu` | `bounds` |
/// | `swish`, `gelu` | `beta` |
/// | `elu`, `celu`, `selu` | `alpha` |
/// | `rational` | `rational_degrees`, `rational_version`, `rational_target` |
/// | `smooth_leaky` | `alpha`, `c`, `p` |
/// | `rand_smooth_leaky` | `bounds`, `c`, `p` |
/// | `bo_prelu` | `alpha` (initial slope), `bounds` (clamp range), `scope` |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub p: f64,
    pub bounds: (f64, f64),
    pub prelu_scope: PreluScope,
    pub rational_degrees: (usize, usize),
    pub rational_version: RationalVersion,
    pub rational_target: RationalTarget,
}

/// Flat key-value form used in config files.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kind: Option<ActivationKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scope: Option<PreluScope>,
    #[serde(skip_serializing_if = "Option::is_none")]
    num_degree: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    den_degree: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    version: Option<RationalVersion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<RationalTarget>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Field {
    Alpha,
    Beta,
    C,
    P,
    Bounds,
    Scope,
    Rational,
}

fn relevant_fields(kind: ActivationKind) -> &'static [Field] {
    use ActivationKind as K;
    match kind {
        K::Relu | K::Sigmoid | K::Tanh | K::Crelu => &[],
        K::LeakyRelu | K::Elu | K::Celu | K::Selu => &[Field::Alpha],
        K::Prelu => &[Field::Alpha, Field::Scope],
        K::Rrelu | K::Rselu => &[Field::Bounds],
        K::Swish | K::Gelu => &[Field::Beta],
        K::Rational => &[Field::Rational],
        K::SmoothLeaky => &[Field::Alpha, Field::C, Field::P],
        K::RandSmoothLeaky => &[Field::Bounds, Field::C, Field::P],
        K::BoPrelu => &[Field::Alpha, Field::Bounds, Field::Scope],
    }
}

impl TryFrom<RawSpec> for ActivationSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let kind = raw
            .kind
            .ok_or_else(|| Error::config("activation spec is missing `kind`"))?;
        let mut spec = ActivationSpec::new(kind);
        let fields = relevant_fields(kind);
        let uses = |f: Field| fields.contains(&f);
        if uses(Field::Alpha) {
            spec.alpha = raw.alpha.unwrap_or(spec.alpha);
        }
        if uses(Field::Beta) {
            spec.beta = raw.beta.unwrap_or(spec.beta);
        }
        if uses(Field::C) {
            spec.c = raw.c.unwrap_or(spec.c);
        }
        if uses(Field::P) {
            spec.p = raw.p.unwrap_or(spec.p);
        }
        if uses(Field::Bounds) {
            spec.bounds = (
                raw.lower.unwrap_or(spec.bounds.0),
                raw.upper.unwrap_or(spec.bounds.1),
            );
        }
        if uses(Field::Scope) {
            spec.prelu_scope = raw.scope.unwrap_or(spec.prelu_scope);
        }
        if uses(Field::Rational) {
            spec.rational_degrees = (
                raw.num_degree.unwrap_or(spec.rational_degrees.0),
                raw.den_degree.unwrap_or(spec.rational_degrees.1),
            );
            spec.rational_version = raw.version.unwrap_or(spec.rational_version);
            spec.rational_target = raw.target.unwrap_or(spec.rational_target);
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl From<ActivationSpec> for RawSpec {
    fn from(spec: ActivationSpec) -> Self {
        let mut raw = RawSpec {
            kind: Some(spec.kind),
            ..RawSpec::default()
        };
        for f in relevant_fields(spec.kind) {
            match f {
                Field::Alpha => raw.alpha = Some(spec.alpha),
                Field::Beta => raw.beta = Some(spec.beta),
                Field::C => raw.c = Some(spec.c),
                Field::P => raw.p = Some(spec.p),
                Field::Bounds => {
                    raw.lower = Some(spec.bounds.0);
                    raw.upper = Some(spec.bounds.1);
                }
                Field::Scope => raw.scope = Some(spec.prelu_scope),
                Field::Rational => {
                    raw.num_degree = Some(spec.rational_degrees.0);
                    raw.den_degree = Some(spec.rational_degrees.1);
                    raw.version = Some(spec.rational_version);
                    raw.target = Some(spec.rational_target);
                }
            }
        }
        raw
    }
}

impl ActivationSpec {
    /// Spec with the default parameters of `kind`.
    pub fn new(kind: ActivationKind) -> Self {
        use ActivationKind as K;
        let mut spec = ActivationSpec {
            kind,
            alpha: 0.0,
            beta: 1.0,
            c: 1.0,
            p: 1.0,
            bounds: (0.0, 0.0),
            prelu_scope: PreluScope::Neuron,
            rational_degrees: (5, 4),
            rational_version: RationalVersion::A,
            rational_target: RationalTarget::LeakyRelu,
        };
        match kind {
            K::LeakyRelu => spec.alpha = 0.01,
            K::Prelu => spec.alpha = 0.25,
            K::Rrelu => spec.bounds = (1.0 / 8.0, 1.0 / 3.0),
            K::Elu | K::Celu => spec.alpha = 1.0,
            K::Selu => spec.alpha = SELU_ALPHA,
            K::SmoothLeaky => {
                spec.alpha = 0.1;
                spec.c = 5.0;
                spec.p = 3.0;
            }
            K::RandSmoothLeaky => {
                spec.bounds = (0.3, 0.6);
                spec.c = 5.0;
                spec.p = 3.0;
            }
            K::BoPrelu => {
                spec.alpha = 0.65;
                spec.bounds = (0.6, 0.8);
            }
            K::Rselu => spec.bounds = (SELU_ALPHA - 0.75, SELU_ALPHA + 0.75),
            _ => {}
        }
        spec
    }

    pub fn leaky_relu(alpha: f64) -> Self {
        ActivationSpec {
            alpha,
            ..ActivationSpec::new(ActivationKind::LeakyRelu)
        }
    }

    pub fn smooth_leaky(alpha: f64, c: f64, p: f64) -> Self {
        ActivationSpec {
            alpha,
            c,
            p,
            ..ActivationSpec::new(ActivationKind::SmoothLeaky)
        }
    }

    pub fn rand_smooth_leaky(lower: f64, upper: f64, c: f64, p: f64) -> Self {
        ActivationSpec {
            bounds: (lower, upper),
            c,
            p,
            ..ActivationSpec::new(ActivationKind::RandSmoothLeaky)
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_bounds(mut self, lower: f64, upper: f64) -> Self {
        self.bounds = (lower, upper);
        self
    }

    pub fn with_scope(mut self, scope: PreluScope) -> Self {
        self.prelu_scope = scope;
        self
    }

    pub fn with_rational(mut self, degrees: (usize, usize), target: RationalTarget) -> Self {
        self.rational_degrees = degrees;
        self.rational_target = target;
        self
    }

    /// Short human-readable label, e.g. `leaky_relu(alpha=0.7)`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        for f in relevant_fields(self.kind) {
            match f {
                Field::Alpha => parts.push(format!("alpha={}", self.alpha)),
                Field::Beta => parts.push(format!("beta={}", self.beta)),
                Field::C => parts.push(format!("c={}", self.c)),
                Field::P => parts.push(format!("p={}", self.p)),
                Field::Bounds => parts.push(format!("l={},u={}", self.bounds.0, self.bounds.1)),
                Field::Scope => parts.push(format!("scope={:?}", self.prelu_scope).to_lowercase()),
                Field::Rational => parts.push(format!(
                    "deg=({},{}),target={:?}",
                    self.rational_degrees.0, self.rational_degrees.1, self.rational_target
                )),
            }
        }
        if parts.is_empty() {
            self.kind.name().to_string()
        } else {
            format!("{}({})", self.kind.name(), parts.join(","))
        }
    }

    pub fn validate(&self) -> Result<()> {
        use ActivationKind as K;
        let fields = relevant_fields(self.kind);
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{}: `{name}` must be finite", self.kind)))
            }
        };
        for f in fields {
            match f {
                Field::Alpha => finite("alpha", self.alpha)?,
                Field::Beta => finite("beta", self.beta)?,
                Field::C => finite("c", self.c)?,
                Field::P => finite("p", self.p)?,
                Field::Bounds => {
                    finite("lower", self.bounds.0)?;
                    finite("upper", self.bounds.1)?;
                }
                _ => {}
            }
        }
        match self.kind {
            K::SmoothLeaky | K::RandSmoothLeaky if self.c <= 0.0 || self.p <= 0.0 => {
                return Err(Error::config(format!(
                    "{}: c and p must be positive (got c={}, p={})",
                    self.kind, self.c, self.p
                )));
            }
            K::Celu if self.alpha == 0.0 => {
                return Err(Error::config("celu: alpha must be non-zero"));
            }
            K::Rational if self.rational_degrees.0 < 1 => {
                return Err(Error::config("rational: numerator degree must be >= 1"));
            }
            _ => {}
        }
        if fields.contains(&Field::Bounds) {
            let (l, u) = self.bounds;
            if self.kind == K::BoPrelu {
                if l >= u {
                    return Err(Error::config(format!(
                        "bo_prelu: alpha_min ({l}) must be < alpha_max ({u})"
                    )));
                }
                if !(self.alpha > l && self.alpha < u) {
                    return Err(Error::config(format!(
                        "bo_prelu: initial alpha {} must lie strictly inside ({l}, {u})",
                        self.alpha
                    )));
                }
            } else if l > u {
                return Err(Error::config(format!(
                    "{}: lower bound {l} exceeds upper bound {u}",
                    self.kind
                )));
            }
        }
        Ok(())
    }

    /// Slope used in Eval mode for randomized kinds, `(l+u)/2`.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.bounds.0 + self.bounds.1)
    }

    /// Output width produced from `width` inputs.
    pub fn output_width(&self, width: usize) -> usize {
        if self.kind == ActivationKind::Crelu {
            2 * width
        } else {
            width
        }
    }
}

/// Mutable parameters of one activation layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationState {
    /// PReLU: α per scope entry. Bo-PReLU: unconstrained α_raw per entry.
    pub learnable_alpha: Vec<f64>,
    pub rational_coeffs: Option<RationalCoeffs>,
}

impl ActivationState {
    /// Initial state for a layer of `width` units.
    pub fn new(spec: &ActivationSpec, width: usize) -> Result<Self> {
        spec.validate()?;
        let entries = match spec.prelu_scope {
            PreluScope::Neuron => width,
            PreluScope::Layer | PreluScope::Global => 1,
        };
        let mut state = ActivationState::empty();
        match spec.kind {
            ActivationKind::Prelu => state.learnable_alpha = vec![spec.alpha; entries],
            ActivationKind::BoPrelu => {
                let (lo, hi) = spec.bounds;
                let raw = scalar::logit((spec.alpha - lo) / (hi - lo));
                state.learnable_alpha = vec![raw; entries];
            }
            ActivationKind::Rational => {
                let (np, nq) = spec.rational_degrees;
                state.rational_coeffs = Some(RationalCoeffs::fit(spec.rational_target, np, nq)?);
            }
            _ => {}
        }
        Ok(state)
    }

    pub fn empty() -> Self {
        ActivationState {
            learnable_alpha: Vec::new(),
            rational_coeffs: None,
        }
    }

    /// Number of trainable scalars.
    pub fn num_params(&self) -> usize {
        self.learnable_alpha.len() + self.rational_coeffs.as_ref().map_or(0, |c| c.len())
    }

    /// Trainable scalars, flattened as `[alpha..., numerator..., denominator...]`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = self.learnable_alpha.clone();
        if let Some(c) = &self.rational_coeffs {
            out.extend_from_slice(&c.numerator);
            out.extend_from_slice(&c.denominator);
        }
        out
    }

    pub fn set_params(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_params(), "activation parameter length");
        let n = self.learnable_alpha.len();
        self.learnable_alpha.copy_from_slice(&values[..n]);
        if let Some(c) = &mut self.rational_coeffs {
            let np = c.numerator.len();
            c.numerator.copy_from_slice(&values[n..n + np]);
            c.denominator.copy_from_slice(&values[n + np..]);
        }
    }

    fn check(&self, spec: &ActivationSpec, width: usize) -> Result<()> {
        match spec.kind {
            ActivationKind::Prelu | ActivationKind::BoPrelu => {
                let expected = match spec.prelu_scope {
                    PreluScope::Neuron => width,
                    _ => 1,
                };
                if self.learnable_alpha.len() != expected {
                    return Err(Error::config(format!(
                        "{} ({:?} scope) expects {expected} slope parameters for width {width}, state has {}",
                        spec.kind,
                        spec.prelu_scope,
                        self.learnable_alpha.len()
                    )));
                }
            }
            ActivationKind::Rational => {
                let c = self
                    .rational_coeffs
                    .as_ref()
                    .ok_or_else(|| Error::config("rational activation without coefficients"))?;
                let (np, nq) = spec.rational_degrees;
                if c.numerator.len() != np + 1 || c.denominator.len() != nq {
                    return Err(Error::config(format!(
                        "rational coefficients do not match degrees ({np}, {nq})"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Forward record needed for an exact backward pass.
#[derive(Debug, Clone)]
pub struct ActTape {
    pub kind: ActivationKind,
    /// Inputs, row-major `[rows × width]`.
    pub x: Vec<f64>,
    pub width: usize,
    /// Negative-branch slope applied to each element (randomized kinds only).
    pub slopes: Option<Vec<f64>>,
}

impl ActTape {
    pub fn rows(&self) -> usize {
        self.x.len().checked_div(self.width).unwrap_or(0)
    }
}

/// Bounded PReLU slope `α_min + (α_max − α_min)·σ(α_raw)`.
pub fn bo_prelu_alpha(alpha_raw: f64, alpha_min: f64, alpha_max: f64) -> Result<f64> {
    if alpha_min >= alpha_max {
        return Err(Error::config(format!(
            "bo_prelu: alpha_min ({alpha_min}) must be < alpha_max ({alpha_max})"
        )));
    }
    Ok(alpha_min + (alpha_max - alpha_min) * sigmoid(alpha_raw))
}

/// Concatenated ReLU `[max(z,0) ∥ max(−z,0)]` for a single vector.
pub fn crelu_concat(z: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * z.len());
    out.extend(z.iter().map(|&v| v.max(0.0)));
    out.extend(z.iter().map(|&v| (-v).max(0.0)));
    out
}

/// Scalar value and derivative of every kind except CReLU and Rational, given
/// the element's negative-branch parameter `a` (slope, ELU scale, or r).
#[inline]
fn eval_shape(spec: &ActivationSpec, a: f64, x: f64) -> (f64, f64) {
    use ActivationKind as K;
    match spec.kind {
        K::Relu => {
            if x > 0.0 {
                (x, 1.0)
            } else {
                (0.0, 0.0)
            }
        }
        K::LeakyRelu | K::Prelu | K::Rrelu | K::BoPrelu => {
            if x > 0.0 {
                (x, 1.0)
            } else {
                (a * x, a)
            }
        }
        K::Sigmoid => (sigmoid(x), sigmoid_derivative(x)),
        K::Tanh => (x.tanh(), tanh_derivative(x)),
        K::Swish => {
            let t = spec.beta * x;
            (x * sigmoid(t), swish_kernel(t))
        }
        K::Gelu => {
            let t = spec.beta * x;
            let cdf = norm_cdf(t);
            (x * cdf, cdf + t * norm_pdf(t))
        }
        K::Elu => {
            if x > 0.0 {
                (x, 1.0)
            } else {
                (a * x.exp_m1(), a * x.exp())
            }
        }
        K::Celu => {
            if x > 0.0 {
                (x, 1.0)
            } else {
                (a * (x / a).exp_m1(), (x / a).exp())
            }
        }
        K::Selu | K::Rselu => {
            if x > 0.0 {
                (SELU_LAMBDA * x, SELU_LAMBDA)
            } else {
                (SELU_LAMBDA * a * x.exp_m1(), SELU_LAMBDA * a * x.exp())
            }
        }
        K::SmoothLeaky | K::RandSmoothLeaky => {
            let t = spec.c * x / spec.p;
            (
                a * x + (1.0 - a) * x * sigmoid(t),
                a + (1.0 - a) * swish_kernel(t),
            )
        }
        K::Crelu | K::Rational => unreachable!("handled by the caller"),
    }
}

/// Negative-branch parameter of a non-randomized kind for unit `col`.
fn fixed_param(spec: &ActivationSpec, state: &ActivationState, col: usize) -> f64 {
    use ActivationKind as K;
    match spec.kind {
        K::LeakyRelu | K::Elu | K::Celu | K::Selu | K::SmoothLeaky => spec.alpha,
        K::Prelu => state.learnable_alpha[alpha_index(spec, col)],
        K::BoPrelu => {
            let raw = state.learnable_alpha[alpha_index(spec, col)];
            spec.bounds.0 + (spec.bounds.1 - spec.bounds.0) * sigmoid(raw)
        }
        K::Rrelu | K::RandSmoothLeaky | K::Rselu => spec.midpoint(),
        _ => 0.0,
    }
}

#[inline]
fn alpha_index(spec: &ActivationSpec, col: usize) -> usize {
    match spec.prelu_scope {
        PreluScope::Neuron => col,
        _ => 0,
    }
}

fn check_finite(x: &[f64], width: usize, what: &str) -> Result<()> {
    if let Some((i, &v)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            location: format!("{what} [row {}, unit {}]", i / width, i % width),
            value: v,
        });
    }
    Ok(())
}

/// Apply the activation to a row-major batch of `width`-wide rows.
///
/// Randomized kinds in [`Mode::Train`] draw one slope per element from `rng`,
/// which is then required. CReLU doubles the row width.
pub fn act_forward(
    spec: &ActivationSpec,
    state: &ActivationState,
    x: &[f64],
    width: usize,
    mode: Mode,
    rng: Option<&mut Rng>,
) -> Result<(Vec<f64>, ActTape)> {
    if width == 0 || !x.len().is_multiple_of(width) {
        return Err(Error::config(format!(
            "activation input length {} is not a multiple of width {width}",
            x.len()
        )));
    }
    check_finite(x, width, "activation input")?;
    state.check(spec, width)?;

    let mut slopes = None;
    let y = match spec.kind {
        ActivationKind::Crelu => {
            let mut y = Vec::with_capacity(2 * x.len());
            for row in x.chunks_exact(width) {
                y.extend(crelu_concat(row));
            }
            y
        }
        ActivationKind::Rational => {
            let coeffs = state.rational_coeffs.as_ref().expect("checked above");
            x.iter().map(|&v| coeffs.value(v)).collect()
        }
        kind if kind.is_randomized() && mode == Mode::Train => {
            let rng = rng.ok_or_else(|| {
                Error::config(format!("{kind} in train mode needs a random number generator"))
            })?;
            let (l, u) = spec.bounds;
            let r: Vec<f64> = x
                .iter()
                .map(|_| if l < u { rng.random_range(l..=u) } else { l })
                .collect();
            let y = x
                .iter()
                .zip(&r)
                .map(|(&v, &a)| eval_shape(spec, a, v).0)
                .collect();
            slopes = Some(r);
            y
        }
        _ => {
            let params: Vec<f64> = (0..width).map(|j| fixed_param(spec, state, j)).collect();
            x.iter()
                .enumerate()
                .map(|(i, &v)| eval_shape(spec, params[i % width], v).0)
                .collect()
        }
    };
    let tape = ActTape {
        kind: spec.kind,
        x: x.to_vec(),
        width,
        slopes,
    };
    Ok((y, tape))
}

/// Derivative of the activation for every taped element, using the sampled
/// slopes where present. CReLU returns `(positive, negative)` branch pairs
/// flattened as `[row: pos..., neg...]`, matching its output layout.
pub fn act_derivatives(spec: &ActivationSpec, state: &ActivationState, tape: &ActTape) -> Result<Vec<f64>> {
    if tape.kind != spec.kind {
        return Err(Error::config(format!(
            "tape recorded {} but spec is {}",
            tape.kind, spec.kind
        )));
    }
    state.check(spec, tape.width)?;
    let width = tape.width;
    Ok(match spec.kind {
        ActivationKind::Crelu => {
            let mut d = Vec::with_capacity(2 * tape.x.len());
            for row in tape.x.chunks_exact(width) {
                d.extend(row.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }));
                d.extend(row.iter().map(|&v| if v <= 0.0 { -1.0 } else { 0.0 }));
            }
            d
        }
        ActivationKind::Rational => {
            let coeffs = state.rational_coeffs.as_ref().expect("checked above");
            tape.x.iter().map(|&v| coeffs.value_and_derivative(v).1).collect()
        }
        _ => match &tape.slopes {
            Some(r) => tape
                .x
                .iter()
                .zip(r)
                .map(|(&v, &a)| eval_shape(spec, a, v).1)
                .collect(),
            None => {
                let params: Vec<f64> = (0..width).map(|j| fixed_param(spec, state, j)).collect();
                tape.x
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| eval_shape(spec, params[i % width], v).1)
                    .collect()
            }
        },
    })
}

/// Largest branch derivative magnitude per taped input element. Equal to
/// `|φ'(x)|` except for CReLU, where it is the larger of its two branches.
pub fn derivative_magnitudes(
    spec: &ActivationSpec,
    state: &ActivationState,
    tape: &ActTape,
) -> Result<Vec<f64>> {
    let d = act_derivatives(spec, state, tape)?;
    if spec.kind != ActivationKind::Crelu {
        return Ok(d.into_iter().map(f64::abs).collect());
    }
    let w = tape.width;
    let mut out = Vec::with_capacity(tape.x.len());
    for row in d.chunks_exact(2 * w) {
        let (pos, neg) = row.split_at(w);
        out.extend(pos.iter().zip(neg).map(|(a, b)| a.abs().max(b.abs())));
    }
    Ok(out)
}

/// Chain rule through the activation. Returns the input gradient and the
/// gradient of the layer's trainable parameters (summed over the batch; empty
/// for kinds without parameters).
pub fn act_backward(
    spec: &ActivationSpec,
    state: &ActivationState,
    tape: &ActTape,
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let width = tape.width;
    let out_len = spec.output_width(width) * tape.rows();
    if upstream.len() != out_len {
        return Err(Error::config(format!(
            "upstream gradient has length {}, expected {out_len}",
            upstream.len()
        )));
    }
    let d = act_derivatives(spec, state, tape)?;
    let dx: Vec<f64> = match spec.kind {
        ActivationKind::Crelu => {
            let mut dx = Vec::with_capacity(tape.x.len());
            for (drow, urow) in d.chunks_exact(2 * width).zip(upstream.chunks_exact(2 * width)) {
                dx.extend((0..width).map(|j| drow[j] * urow[j] + drow[width + j] * urow[width + j]));
            }
            dx
        }
        _ => d.iter().zip(upstream).map(|(a, b)| a * b).collect(),
    };

    let mut dparams = vec![0.0; state.num_params()];
    match spec.kind {
        ActivationKind::Prelu => {
            for (i, (&x, &g)) in tape.x.iter().zip(upstream).enumerate() {
                if x <= 0.0 {
                    dparams[alpha_index(spec, i % width)] += g * x;
                }
            }
        }
        ActivationKind::BoPrelu => {
            let span = spec.bounds.1 - spec.bounds.0;
            for (i, (&x, &g)) in tape.x.iter().zip(upstream).enumerate() {
                if x <= 0.0 {
                    let k = alpha_index(spec, i % width);
                    let raw = state.learnable_alpha[k];
                    dparams[k] += g * x * span * sigmoid_derivative(raw);
                }
            }
        }
        ActivationKind::Rational => {
            let coeffs = state.rational_coeffs.as_ref().expect("checked above");
            for (&x, &g) in tape.x.iter().zip(upstream) {
                coeffs.accumulate_param_grad(x, g, &mut dparams);
            }
        }
        _ => {}
    }
    Ok((dx, dparams))
}

/// RSELU forward on a plain vector.
pub fn rselu_forward(x: &[f64], bounds: (f64, f64), mode: Mode, rng: Option<&mut Rng>) -> Result<Vec<f64>> {
    let spec = ActivationSpec::new(ActivationKind::Rselu).with_bounds(bounds.0, bounds.1);
    spec.validate()?;
    let width = x.len().max(1);
    if x.is_empty() {
        return Ok(Vec::new());
    }
    Ok(act_forward(&spec, &ActivationState::empty(), x, width, mode, rng)?.0)
}

/// Safe rational forward on a plain vector.
pub fn rational_forward(x: &[f64], coeffs: &RationalCoeffs) -> Result<Vec<f64>> {
    if coeffs.numerator.len() < 2 {
        return Err(Error::config("rational: numerator degree must be >= 1"));
    }
    Ok(x.iter().map(|&v| coeffs.value(v)).collect())
}

/// Deterministic scalar view of an activation (Eval-mode slopes, the first
/// learnable entry), used by the analytic property probes.
#[derive(Debug, Clone)]
pub struct Probe {
    spec: ActivationSpec,
    param: f64,
    coeffs: Option<RationalCoeffs>,
}

impl Probe {
    /// Probe an activation; without `state` the initial parameters are used.
    pub fn new(spec: &ActivationSpec, state: Option<&ActivationState>) -> Result<Self> {
        spec.validate()?;
        let owned;
        let state = match state {
            Some(s) => s,
            None => {
                owned = ActivationState::new(spec, 1)?;
                &owned
            }
        };
        let param = match spec.kind {
            ActivationKind::Prelu | ActivationKind::BoPrelu => {
                if state.learnable_alpha.is_empty() {
                    return Err(Error::config(format!(
                        "{} state has no slope parameters",
                        spec.kind
                    )));
                }
                let first_entry = spec.clone().with_scope(PreluScope::Layer);
                fixed_param(&first_entry, state, 0)
            }
            ActivationKind::Rational if state.rational_coeffs.is_none() => {
                return Err(Error::config("rational activation without coefficients"));
            }
            _ => fixed_param(spec, state, 0),
        };
        Ok(Probe {
            spec: spec.clone(),
            param,
            coeffs: state.rational_coeffs.clone(),
        })
    }

    pub fn spec(&self) -> &ActivationSpec {
        &self.spec
    }

    /// Value; CReLU reports its positive branch.
    pub fn value(&self, x: f64) -> f64 {
        self.value_and_derivative(x).0
    }

    /// Derivative; CReLU reports its positive branch.
    pub fn derivative(&self, x: f64) -> f64 {
        self.value_and_derivative(x).1
    }

    fn value_and_derivative(&self, x: f64) -> (f64, f64) {
        match self.spec.kind {
            ActivationKind::Crelu => {
                if x > 0.0 {
                    (x, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            ActivationKind::Rational => self
                .coeffs
                .as_ref()
                .expect("rational probe has coefficients")
                .value_and_derivative(x),
            _ => eval_shape(&self.spec, self.param, x),
        }
    }

    /// Derivative of each output branch (one branch except for CReLU).
    pub fn branch_derivatives(&self, x: f64) -> (f64, Option<f64>) {
        if self.spec.kind == ActivationKind::Crelu {
            let pos = if x > 0.0 { 1.0 } else { 0.0 };
            let neg = if x <= 0.0 { -1.0 } else { 0.0 };
            (pos, Some(neg))
        } else {
            (self.derivative(x), None)
        }
    }

    /// Largest branch derivative magnitude.
    pub fn derivative_magnitude(&self, x: f64) -> f64 {
        match self.branch_derivatives(x) {
            (a, Some(b)) => a.abs().max(b.abs()),
            (a, None) => a.abs(),
        }
    }
}

/// Kaiming fan-in gain `sqrt(2 / (1 + a²))` for the activation's initial
/// negative slope `a`. Sigmoid, Tanh, SELU and RSELU use gain 1; smooth kinds
/// use their effective negative slope as `a`.
pub fn kaiming_gain(spec: &ActivationSpec) -> Result<f64> {
    use ActivationKind as K;
    let rectifier = |a: f64| (2.0 / (1.0 + a * a)).sqrt();
    Ok(match spec.kind {
        K::Sigmoid | K::Tanh | K::Selu | K::Rselu => 1.0,
        K::Relu | K::Crelu => rectifier(0.0),
        K::LeakyRelu | K::Prelu | K::BoPrelu => rectifier(spec.alpha),
        K::Rrelu => rectifier(spec.midpoint()),
        K::Swish | K::Gelu | K::Elu | K::Celu | K::SmoothLeaky | K::RandSmoothLeaky | K::Rational => {
            let s = crate::props::effective_negative_slope(
                spec,
                None,
                crate::props::SlopeDistribution::default(),
            )?;
            rectifier(s)
        }
    })
}
