//! Fully nonlinear operators `F(M, x)` on symmetric matrices.
//!
//! [`OperatorSpec`] describes the built-in operators (serializable, used by
//! the CLI); anything else can take part in the checks and the solver by
//! implementing [`EllipticOperator`]. Matrix norms are Frobenius throughout.

mod checks;
mod sym;

pub use checks::{
    check_sc, gateaux, oscillation_theta, scaling_family, tangential_limit, verify_ellipticity,
    EllipticityReport, ScReport, TangentialLimit, TangentialPlan, ThetaReport,
};
pub use sym::{SymMatrix, MAX_DIM, MIN_DIM};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of the matrix norm recorded in every report.
pub const MATRIX_NORM: &str = "frobenius";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid operator: {0}")]
    Invalid(String),
    #[error("operator is not differentiable at the origin: {0}")]
    NotDifferentiable(String),
    #[error("tangential limit violates the ellipticity bounds: eigenvalues in [{min}, {max}]")]
    LimitOutOfBounds { min: f64, max: f64 },
    #[error("numeric error: {0}")]
    Numeric(String),
}

/// Ellipticity constants `0 < λ <= Λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityPair {
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
}

impl EllipticityPair {
    pub fn new(lambda: f64, big_lambda: f64) -> Result<Self, OperatorError> {
        if lambda > 0.0 && big_lambda >= lambda && big_lambda.is_finite() {
            Ok(EllipticityPair { lambda, big_lambda })
        } else {
            Err(OperatorError::Invalid(format!(
                "ellipticity pair needs 0 < lambda <= Lambda, got ({lambda}, {big_lambda})"
            )))
        }
    }
}

/// 𝒫⁺(M) = Λ Σ eᵢ⁺ − λ Σ eᵢ⁻ over the eigenvalues of M.
pub fn pucci_plus(m: &SymMatrix, pair: EllipticityPair) -> f64 {
    m.eigenvalues()
        .into_iter()
        .map(|e| {
            if e > 0.0 {
                pair.big_lambda * e
            } else {
                pair.lambda * e
            }
        })
        .sum()
}

/// 𝒫⁻(M) = λ Σ eᵢ⁺ − Λ Σ eᵢ⁻ over the eigenvalues of M.
pub fn pucci_minus(m: &SymMatrix, pair: EllipticityPair) -> f64 {
    m.eigenvalues()
        .into_iter()
        .map(|e| {
            if e > 0.0 {
                pair.lambda * e
            } else {
                pair.big_lambda * e
            }
        })
        .sum()
}

/// A uniformly elliptic operator `F(M, x)`.
pub trait EllipticOperator {
    fn dim(&self) -> usize;

    /// Declared ellipticity constants.
    fn pair(&self) -> EllipticityPair;

    fn eval(&self, m: &SymMatrix, x: &[f64]) -> f64;

    /// Closed-form differential `D` with `dF = tr(D dM)`, when known.
    fn differential(&self, _m: &SymMatrix, _x: &[f64]) -> Option<SymMatrix> {
        None
    }

    fn is_x_independent(&self) -> bool {
        false
    }
}

impl<T: EllipticOperator + ?Sized> EllipticOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn pair(&self) -> EllipticityPair {
        (**self).pair()
    }
    fn eval(&self, m: &SymMatrix, x: &[f64]) -> f64 {
        (**self).eval(m, x)
    }
    fn differential(&self, m: &SymMatrix, x: &[f64]) -> Option<SymMatrix> {
        (**self).differential(m, x)
    }
    fn is_x_independent(&self) -> bool {
        (**self).is_x_independent()
    }
}

/// Smooth perturbations `g` with `g(O) = 0`, `Dg(O) = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// g(M) = ½ sin(M₁₁)(1 − cos M₂₂); entries beyond the leading 2×2
    /// diagonal do not enter. |∂g/∂M₁₁| ≤ 1, |∂g/∂M₂₂| ≤ ½.
    #[default]
    SinCos,
}

impl Perturbation {
    pub fn eval(self, m: &SymMatrix) -> f64 {
        match self {
            Perturbation::SinCos => 0.5 * m.get(0, 0).sin() * (1.0 - m.get(1, 1).cos()),
        }
    }

    pub fn gradient(self, m: &SymMatrix) -> SymMatrix {
        match self {
            Perturbation::SinCos => {
                let (a, b) = (m.get(0, 0), m.get(1, 1));
                let mut d = SymMatrix::zeros(m.dim());
                d.set(0, 0, 0.5 * a.cos() * (1.0 - b.cos()));
                d.set(1, 1, 0.5 * a.sin() * b.sin());
                d
            }
        }
    }

    /// Bound on `|g(M + N) − g(M)| / tr N` over `N >= 0`.
    pub fn increment_bound(self) -> f64 {
        match self {
            Perturbation::SinCos => 1.0,
        }
    }
}

/// Multiplicative x-dependence `F(M, x) = a(x)·F₀(M)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CoefficientField {
    /// a(x) = base + slope·‖x‖
    Radial { base: f64, slope: f64 },
    /// a(x) = base + ⟨gradient, x⟩
    Affine { base: f64, gradient: Vec<f64> },
}

impl CoefficientField {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            CoefficientField::Radial { base, slope } => {
                base + slope * x.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
            CoefficientField::Affine { base, gradient } => {
                base + gradient.iter().zip(x).map(|(g, v)| g * v).sum::<f64>()
            }
        }
    }

    /// Range of `a` over the closed unit ball.
    fn unit_ball_range(&self) -> (f64, f64) {
        match self {
            CoefficientField::Radial { base, slope } => {
                (base + slope.min(0.0), base + slope.max(0.0))
            }
            CoefficientField::Affine { base, gradient } => {
                let g = gradient.iter().map(|v| v * v).sum::<f64>().sqrt();
                (base - g, base + g)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    /// F(M) = tr(AM)
    LinearTrace {
        a: SymMatrix,
    },
    PucciPlus,
    PucciMinus,
    /// F(M) = tr(M) + ε·g(M)
    PerturbedTrace {
        epsilon: f64,
        #[serde(default)]
        perturbation: Perturbation,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct OperatorRepr {
    #[serde(flatten)]
    kind: OperatorKind,
    #[serde(default = "default_dim")]
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pair: Option<EllipticityPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coefficient: Option<CoefficientField>,
}

fn default_dim() -> usize {
    2
}

/// Descriptor of a built-in operator with its declared ellipticity pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorRepr", into = "OperatorRepr")]
pub struct OperatorSpec {
    kind: OperatorKind,
    dim: usize,
    pair: EllipticityPair,
    coefficient: Option<CoefficientField>,
}

impl TryFrom<OperatorRepr> for OperatorSpec {
    type Error = OperatorError;
    fn try_from(r: OperatorRepr) -> Result<Self, Self::Error> {
        OperatorSpec::build(r.kind, r.dim, r.pair, r.coefficient)
    }
}

impl From<OperatorSpec> for OperatorRepr {
    fn from(s: OperatorSpec) -> Self {
        OperatorRepr {
            kind: s.kind,
            dim: s.dim,
            pair: Some(s.pair),
            coefficient: s.coefficient,
        }
    }
}

impl OperatorSpec {
    /// Validates `kind` and resolves the declared pair. Without an explicit
    /// pair: the spectrum bounds of `A` for `linear_trace`, `(1 − cε, 1 + cε)`
    /// for `perturbed_trace` (c bounds the increments of g), scaled by the
    /// range of the coefficient field over the unit ball. Pucci operators
    /// always need an explicit pair.
    pub fn build(
        kind: OperatorKind,
        dim: usize,
        pair: Option<EllipticityPair>,
        coefficient: Option<CoefficientField>,
    ) -> Result<Self, OperatorError> {
        if !(MIN_DIM..=MAX_DIM).contains(&dim) {
            return Err(OperatorError::Dimension(format!(
                "operator dimension must be in 2..=4, got {dim}"
            )));
        }
        let base = match &kind {
            OperatorKind::LinearTrace { a } => {
                if a.dim() != dim {
                    return Err(OperatorError::Dimension(format!(
                        "coefficient matrix is {}x{}, operator dimension is {dim}",
                        a.dim(),
                        a.dim()
                    )));
                }
                let ev = a.eigenvalues();
                Some(EllipticityPair::new(ev[0], ev[dim - 1])?)
            }
            OperatorKind::PucciPlus | OperatorKind::PucciMinus => {
                if pair.is_none() {
                    return Err(OperatorError::Invalid(
                        "Pucci operators need an explicit ellipticity pair".into(),
                    ));
                }
                None
            }
            OperatorKind::PerturbedTrace {
                epsilon,
                perturbation,
            } => {
                let c = perturbation.increment_bound() * epsilon;
                if !(*epsilon >= 0.0 && c < 1.0) {
                    return Err(OperatorError::Invalid(format!(
                        "perturbed_trace needs 0 <= epsilon < {}, got {epsilon}",
                        1.0 / perturbation.increment_bound()
                    )));
                }
                Some(EllipticityPair::new(1.0 - c, 1.0 + c)?)
            }
        };
        if let Some(cf) = &coefficient {
            if let CoefficientField::Affine { gradient, .. } = cf {
                if gradient.len() != dim {
                    return Err(OperatorError::Dimension(
                        "coefficient gradient length differs from the dimension".into(),
                    ));
                }
            }
            if cf.unit_ball_range().0 <= 0.0 {
                return Err(OperatorError::Invalid(
                    "coefficient field must stay positive on the unit ball".into(),
                ));
            }
        }
        let pair = match (pair, base) {
            (Some(p), _) => EllipticityPair::new(p.lambda, p.big_lambda)?,
            (None, Some(b)) => match &coefficient {
                Some(cf) => {
                    let (lo, hi) = cf.unit_ball_range();
                    EllipticityPair::new(b.lambda * lo, b.big_lambda * hi)?
                }
                None => b,
            },
            (None, None) => unreachable!("pucci without pair rejected above"),
        };
        Ok(OperatorSpec {
            kind,
            dim,
            pair,
            coefficient,
        })
    }

    pub fn linear_trace(a: SymMatrix) -> Result<Self, OperatorError> {
        let n = a.dim();
        Self::build(OperatorKind::LinearTrace { a }, n, None, None)
    }

    pub fn laplacian(n: usize) -> Self {
        Self::linear_trace(SymMatrix::identity(n)).expect("identity is elliptic")
    }

    pub fn pucci_plus(n: usize, pair: EllipticityPair) -> Result<Self, OperatorError> {
        Self::build(OperatorKind::PucciPlus, n, Some(pair), None)
    }

    pub fn pucci_minus(n: usize, pair: EllipticityPair) -> Result<Self, OperatorError> {
        Self::build(OperatorKind::PucciMinus, n, Some(pair), None)
    }

    pub fn perturbed_trace(n: usize, epsilon: f64) -> Result<Self, OperatorError> {
        Self::build(
            OperatorKind::PerturbedTrace {
                epsilon,
                perturbation: Perturbation::SinCos,
            },
            n,
            None,
            None,
        )
    }

    /// Replaces the declared pair (used to probe the ellipticity verifier).
    pub fn with_pair(mut self, pair: EllipticityPair) -> Self {
        self.pair = pair;
        self
    }

    pub fn with_coefficient(self, coefficient: CoefficientField) -> Result<Self, OperatorError> {
        Self::build(self.kind, self.dim, None, Some(coefficient))
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn coefficient(&self) -> Option<&CoefficientField> {
        self.coefficient.as_ref()
    }

    fn base_eval(&self, m: &SymMatrix) -> f64 {
        match &self.kind {
            OperatorKind::LinearTrace { a } => a.dot(m),
            OperatorKind::PucciPlus => pucci_plus(m, self.pair),
            OperatorKind::PucciMinus => pucci_minus(m, self.pair),
            OperatorKind::PerturbedTrace {
                epsilon,
                perturbation,
            } => m.trace() + epsilon * perturbation.eval(m),
        }
    }
}

impl EllipticOperator for OperatorSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn pair(&self) -> EllipticityPair {
        self.pair
    }

    fn eval(&self, m: &SymMatrix, x: &[f64]) -> f64 {
        let v = self.base_eval(m);
        match &self.coefficient {
            Some(cf) => cf.eval(x) * v,
            None => v,
        }
    }

    fn differential(&self, _m: &SymMatrix, x: &[f64]) -> Option<SymMatrix> {
        match &self.kind {
            OperatorKind::LinearTrace { a } => Some(match &self.coefficient {
                Some(cf) => cf.eval(x) * *a,
                None => *a,
            }),
            _ => None,
        }
    }

    fn is_x_independent(&self) -> bool {
        self.coefficient.is_none()
    }
}
