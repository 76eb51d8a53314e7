//! Quadratic approximation at shrinking scales.
//!
//! Jets are fitted by least squares over the grid nodes of a ball and then
//! shifted along the identity, `M ← M + a·Id`, until `F(M, x0) = 0`. The
//! dyadic audit repeats the fit at radii `ρ₀ᵏ` and records how fast the
//! residual `sup |u − P_k|` decays against `ρ₀^{2k} τ(ρ₀ᵏ)`.

mod audit;
mod flatness;

pub use audit::{
    c2psi_seminorm, decay_audit, fit_decay_exponent, rescale_field, AuditConfig, AuditRecord,
    DecayAudit, DecayExponent, SeminormReport,
};
pub use flatness::{flatness_threshold_search, FlatnessFamily, FlatnessRow, FlatnessTable};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{FieldError, GridField};
use crate::moduli::ModulusError;
use crate::operators::{EllipticOperator, SymMatrix};
use crate::solver::SolverError;

/// Minimum number of nodes in a fitting ball.
pub const MIN_BALL_NODES: usize = 15;

#[derive(Debug, Error)]
pub enum CampanatoError {
    #[error("bisection bracket violated: F(M − tId) = {lower}, F(M + tId) = {upper} with t = {t}")]
    Bracket { lower: f64, upper: f64, t: f64 },
    #[error("only {count} nodes in the fitting ball, need at least {MIN_BALL_NODES}")]
    TooFewNodes { count: usize },
    #[error("least-squares system is rank deficient")]
    RankDeficient,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Modulus(#[from] ModulusError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// `P(y) = c + b·y + ½ yᵀMy` in coordinates `y = x − x0` centred at the
/// fitting point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticJet {
    pub c: f64,
    pub b: [f64; 2],
    pub m: SymMatrix,
}

impl QuadraticJet {
    pub fn zero() -> Self {
        QuadraticJet {
            c: 0.0,
            b: [0.0, 0.0],
            m: SymMatrix::zeros(2),
        }
    }

    pub fn eval(&self, y: [f64; 2]) -> f64 {
        let m = &self.m;
        self.c
            + self.b[0] * y[0]
            + self.b[1] * y[1]
            + 0.5
                * (m.get(0, 0) * y[0] * y[0]
                    + 2.0 * m.get(0, 1) * y[0] * y[1]
                    + m.get(1, 1) * y[1] * y[1])
    }

    pub fn is_finite(&self) -> bool {
        self.c.is_finite() && self.b.iter().all(|v| v.is_finite()) && self.m.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootCorrection {
    pub a: f64,
    /// `F(M̄ + a·Id, x0)` at the returned shift.
    pub residual: f64,
    pub tolerance: f64,
    pub bisections: usize,
}

/// Finds `a` with `F(M̄ + a·Id, x0) ≈ 0` by bisection on
/// `[−|F(M̄)|/(nλ), |F(M̄)|/(nλ)]`, refined to machine resolution.
pub fn root_correct(
    op: &impl EllipticOperator,
    mbar: &SymMatrix,
    x0: &[f64],
) -> Result<RootCorrection, CampanatoError> {
    let n = op.dim();
    let id = SymMatrix::identity(n);
    let g = |t: f64| op.eval(&(*mbar + t * id), x0);
    let f0 = g(0.0);
    let tolerance = 1e-10 * (1.0 + f0.abs());
    if f0 == 0.0 {
        return Ok(RootCorrection {
            a: 0.0,
            residual: 0.0,
            tolerance,
            bisections: 0,
        });
    }
    let t = f0.abs() / (n as f64 * op.pair().lambda);
    let (mut lo, mut hi) = (-t, t);
    let (glo, ghi) = (g(lo), g(hi));
    let slack = 1e-12 * (1.0 + f0.abs());
    if glo > slack || ghi < -slack {
        return Err(CampanatoError::Bracket {
            lower: glo,
            upper: ghi,
            t,
        });
    }
    let mut best = if glo.abs() < ghi.abs() {
        (lo, glo)
    } else {
        (hi, ghi)
    };
    let mut bisections = 0;
    while bisections < 200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        bisections += 1;
        if gm.abs() < best.1.abs() || (gm.abs() == best.1.abs() && mid.abs() < best.0.abs()) {
            best = (mid, gm);
        }
        if gm == 0.0 {
            break;
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.1.abs() > tolerance {
        return Err(CampanatoError::Bracket {
            lower: g(lo),
            upper: g(hi),
            t,
        });
    }
    Ok(RootCorrection {
        a: best.0,
        residual: best.1,
        tolerance,
        bisections,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub jet: QuadraticJet,
    /// Least-squares jet before the identity shift.
    pub raw: QuadraticJet,
    pub correction: RootCorrection,
    pub nodes: usize,
}

/// Least-squares quadratic over the nodes of `B_rho(x0)` followed by the
/// identity shift that enforces `F(M, x0) = 0`.
pub fn constrained_quadratic_fit(
    u: &GridField,
    op: &impl EllipticOperator,
    rho: f64,
    center: (usize, usize),
) -> Result<QuadraticFit, CampanatoError> {
    let grid = u.grid();
    if !grid.ball_inside(center, rho) {
        return Err(
            FieldError::Domain(format!("ball of radius {rho} leaves the grid square")).into(),
        );
    }
    let nodes = grid.ball_nodes(center, rho);
    if nodes.len() < MIN_BALL_NODES {
        return Err(CampanatoError::TooFewNodes { count: nodes.len() });
    }
    let x0 = grid.point(center.0, center.1);
    let h = grid.spacing();
    let mut a = DMatrix::zeros(nodes.len(), 6);
    let mut rhs = DVector::zeros(nodes.len());
    for (row, &(i, j)) in nodes.iter().enumerate() {
        // Offsets from whole index steps keep the design matrix identical
        // for grids that are rescaled copies of each other.
        let s = [
            (i as f64 - center.0 as f64) * h / rho,
            (j as f64 - center.1 as f64) * h / rho,
        ];
        let basis = [1.0, s[0], s[1], s[0] * s[0], s[0] * s[1], s[1] * s[1]];
        for (k, v) in basis.into_iter().enumerate() {
            a[(row, k)] = v;
        }
        rhs[row] = u.get(i, j);
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if !(svd.singular_values.min() > 1e-10 * smax) {
        return Err(CampanatoError::RankDeficient);
    }
    let coef = svd
        .solve(&rhs, 0.0)
        .map_err(|_| CampanatoError::RankDeficient)?;
    let r2 = rho * rho;
    let mut m = SymMatrix::zeros(2);
    m.set(0, 0, 2.0 * coef[3] / r2);
    m.set(0, 1, coef[4] / r2);
    m.set(1, 1, 2.0 * coef[5] / r2);
    let raw = QuadraticJet {
        c: coef[0],
        b: [coef[1] / rho, coef[2] / rho],
        m,
    };
    let correction = root_correct(op, &raw.m, &x0)?;
    let jet = QuadraticJet {
        m: raw.m + correction.a * SymMatrix::identity(2),
        ..raw.clone()
    };
    Ok(QuadraticFit {
        jet,
        raw,
        correction,
        nodes: nodes.len(),
    })
}

/// `sup |u − P|` over the nodes of the closed ball `B_r(x0)`.
pub fn sup_residual(u: &GridField, jet: &QuadraticJet, center: (usize, usize), r: f64) -> f64 {
    let grid = u.grid();
    let h = grid.spacing();
    grid.ball_nodes(center, r)
        .into_iter()
        .map(|(i, j)| {
            let y = [
                (i as f64 - center.0 as f64) * h,
                (j as f64 - center.1 as f64) * h,
            ];
            (u.get(i, j) - jet.eval(y)).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{sample_function, GridParams, TestFunction};
    use crate::operators::{EllipticityPair, OperatorSpec};

    #[test]
    fn root_correct_linear_trace_is_exact() {
        let op = OperatorSpec::laplacian(2);
        let m = SymMatrix::from_rows(&[vec![0.7, 0.2], vec![0.2, 1.9]]).unwrap();
        let rc = root_correct(&op, &m, &[0.0, 0.0]).unwrap();
        assert!((rc.a + m.trace() / 2.0).abs() < 1e-12);
        let z = root_correct(&op, &SymMatrix::diag(&[1.0, -1.0]), &[0.0, 0.0]).unwrap();
        assert_eq!(z.a, 0.0);
    }

    #[test]
    fn root_correct_pucci_branch() {
        let op = OperatorSpec::pucci_plus(2, EllipticityPair::new(1.0, 2.0).unwrap()).unwrap();
        let rc = root_correct(&op, &SymMatrix::diag(&[1.0, -1.0]), &[0.0, 0.0]).unwrap();
        assert!((rc.a + 1.0 / 3.0).abs() < 1e-12, "{}", rc.a);
    }

    #[test]
    fn overstated_lambda_breaks_the_bracket() {
        // Declaring λ above the true value shrinks the bracket past the root.
        let op = OperatorSpec::laplacian(2).with_pair(EllipticityPair::new(3.0, 3.0).unwrap());
        let err = root_correct(&op, &SymMatrix::diag(&[1.0, 1.0]), &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, CampanatoError::Bracket { .. }));
    }

    #[test]
    fn fit_recovers_admissible_quadratic() {
        let m = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, -1.0]]).unwrap();
        let g = GridParams::new(33, 1.0).unwrap();
        let u = sample_function(&TestFunction::quadratic(m), g).unwrap();
        let fit =
            constrained_quadratic_fit(&u, &OperatorSpec::laplacian(2), 0.5, g.center()).unwrap();
        assert!((fit.jet.m - m).frobenius() < 1e-11);
        assert!(fit.jet.c.abs() < 1e-13 && fit.jet.b[0].abs() < 1e-12);
        assert!(sup_residual(&u, &fit.jet, g.center(), 0.5) < 1e-12);
    }

    #[test]
    fn fit_enforces_the_constraint() {
        let g = GridParams::new(33, 1.0).unwrap();
        let u = sample_function(&TestFunction::quadratic(SymMatrix::diag(&[1.0, 3.0])), g).unwrap();
        let fit =
            constrained_quadratic_fit(&u, &OperatorSpec::laplacian(2), 0.5, g.center()).unwrap();
        assert!(fit.jet.m.trace().abs() < 1e-10);
        assert!((fit.raw.m.trace() - 4.0).abs() < 1e-10);
    }

    #[test]
    fn tiny_balls_are_rejected() {
        let g = GridParams::new(17, 1.0).unwrap();
        let u = GridField::zeros(g, 1);
        let err = constrained_quadratic_fit(&u, &OperatorSpec::laplacian(2), 0.15, g.center())
            .unwrap_err();
        assert!(matches!(err, CampanatoError::TooFewNodes { .. }));
    }
}
