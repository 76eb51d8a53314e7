//! Finite-difference solver for `F(D²u, x) + ⟨B(x), Du⟩ = f(x)` on the grid
//! square with Dirichlet data, plus a manufactured-solution harness.
//!
//! The discretization uses the central stencils of [`crate::fields`]; the
//! unknowns are the interior nodes and the boundary ring is pinned to the
//! boundary values. Newton steps solve the banded Jacobian system directly.

mod banded;

pub use banded::{BandLu, BandMatrix, SingularPivot};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{
    gradient_unchecked, hessian_unchecked, FieldError, GridField, GridParams, TestFunction,
};
use crate::operators::{EllipticOperator, OperatorSpec, SymMatrix};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("problem mismatch: {0}")]
    Mismatch(String),
    #[error("singular Jacobian at unknown {0}")]
    Singular(usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Operator(#[from] crate::operators::OperatorError),
}

/// Drift fields `B(x)` that can be generated from a description.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Drift {
    #[default]
    Zero,
    /// scale·(x₂, −x₁)
    Rotation {
        scale: f64,
    },
    Constant {
        b: [f64; 2],
    },
}

impl Drift {
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        match self {
            Drift::Zero => [0.0, 0.0],
            Drift::Rotation { scale } => [scale * x[1], -scale * x[0]],
            Drift::Constant { b } => *b,
        }
    }

    pub fn sample(&self, grid: GridParams) -> GridField {
        GridField::from_vector_fn(grid, 2, |x, out| out.copy_from_slice(&self.eval(x)))
            .expect("drift descriptions are finite")
    }
}

/// A discrete instance of the equation on one grid.
#[derive(Clone, Debug)]
pub struct ProblemInstance<O = OperatorSpec> {
    pub op: O,
    /// Two-component drift field.
    pub drift: GridField,
    pub source: GridField,
    /// Only the values on the boundary ring are used.
    pub boundary: GridField,
}

impl<O: EllipticOperator> ProblemInstance<O> {
    pub fn new(
        op: O,
        drift: GridField,
        source: GridField,
        boundary: GridField,
    ) -> Result<Self, SolverError> {
        if op.dim() != 2 {
            return Err(SolverError::Mismatch(
                "the solver works in two dimensions".into(),
            ));
        }
        let g = *source.grid();
        if *drift.grid() != g || *boundary.grid() != g {
            return Err(SolverError::Mismatch(
                "drift, source and boundary must share a grid".into(),
            ));
        }
        if drift.components() != 2 || source.components() != 1 || boundary.components() != 1 {
            return Err(SolverError::Mismatch(
                "drift needs two components, source and boundary one".into(),
            ));
        }
        Ok(ProblemInstance {
            op,
            drift,
            source,
            boundary,
        })
    }

    pub fn grid(&self) -> GridParams {
        *self.source.grid()
    }

    /// The boundary data on the ring and zero inside.
    pub fn boundary_guess(&self) -> GridField {
        let g = self.grid();
        let mut u = GridField::zeros(g, 1);
        for j in 0..g.nodes() {
            for i in 0..g.nodes() {
                if g.is_boundary(i, j) {
                    u.set(i, j, self.boundary.get(i, j));
                }
            }
        }
        u
    }

    #[inline]
    fn node_residual(&self, u: &GridField, i: usize, j: usize, x: [f64; 2]) -> f64 {
        let h = hessian_unchecked(u, i, j);
        let g = gradient_unchecked(u, i, j);
        let b = self.drift.vector(i, j);
        self.op.eval(&h, &x) + b[0] * g[0] + b[1] * g[1] - self.source.get(i, j)
    }
}

/// Nodewise residual: the discrete equation at interior nodes and `u − g`
/// on the boundary ring.
pub fn discrete_residual<O: EllipticOperator>(
    inst: &ProblemInstance<O>,
    u: &GridField,
) -> Result<GridField, SolverError> {
    let g = inst.grid();
    if *u.grid() != g || u.components() != 1 {
        return Err(SolverError::Mismatch(
            "u is not a scalar field on the problem grid".into(),
        ));
    }
    let mut r = GridField::zeros(g, 1);
    for j in 0..g.nodes() {
        for i in 0..g.nodes() {
            let v = if g.is_boundary(i, j) {
                u.get(i, j) - inst.boundary.get(i, j)
            } else {
                inst.node_residual(u, i, j, g.point(i, j))
            };
            r.set(i, j, v);
        }
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-10,
            max_iter: 30,
            max_halvings: 20,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: GridField,
    /// Residual sup-norm before each Newton step and after the last one.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Total number of step halvings over the run.
    pub damping_events: usize,
    pub failure: Option<String>,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::NAN)
    }
}

#[cfg(test)]
fn sup_interior(r: &GridField) -> f64 {
    let g = r.grid();
    let n = g.nodes();
    let mut m: f64 = 0.0;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            m = m.max(r.get(i, j).abs());
        }
    }
    m
}

/// Interior residual sup-norm of `u` (boundary values of `u` replaced by
/// the data).
fn residual_sup<O: EllipticOperator>(inst: &ProblemInstance<O>, u: &GridField) -> f64 {
    let g = inst.grid();
    let n = g.nodes();
    let mut m: f64 = 0.0;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            m = m.max(inst.node_residual(u, i, j, g.point(i, j)).abs());
        }
    }
    m
}

/// Coefficients of `F` with respect to the packed Hessian entries
/// `(H₁₁, H₂₂, H₁₂)`, exact when the operator provides a differential.
fn hessian_sensitivities<O: EllipticOperator>(op: &O, h: &SymMatrix, x: [f64; 2]) -> [f64; 3] {
    if let Some(d) = op.differential(h, &x) {
        return [d.get(0, 0), d.get(1, 1), 2.0 * d.get(0, 1)];
    }
    let step = 1e-6 * (1.0 + h.frobenius());
    let f0 = op.eval(h, &x);
    let mut out = [0.0; 3];
    for (k, (a, b)) in [(0, 0), (1, 1), (0, 1)].into_iter().enumerate() {
        let e = SymMatrix::basis(2, a, b);
        out[k] = (op.eval(&(*h + step * e), &x) - f0) / step;
    }
    out
}

fn assemble_jacobian<O: EllipticOperator>(
    inst: &ProblemInstance<O>,
    u: &GridField,
) -> (BandMatrix, Vec<f64>) {
    let g = inst.grid();
    let n = g.nodes();
    let m = n - 2;
    let h = g.spacing();
    let (ih2, i4h2, i2h) = (1.0 / (h * h), 0.25 / (h * h), 0.5 / h);
    let mut jac = BandMatrix::zeros(m * m, m + 1, m + 1);
    let mut rhs = vec![0.0; m * m];
    let unknown = |i: usize, j: usize| (j - 1) * m + (i - 1);
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let x = g.point(i, j);
            let row = unknown(i, j);
            let hess = hessian_unchecked(u, i, j);
            let [a11, a22, c12] = hessian_sensitivities(&inst.op, &hess, x);
            let b = inst.drift.vector(i, j);
            rhs[row] = -inst.node_residual(u, i, j, x);
            let stencil = [
                (0isize, 0isize, -2.0 * (a11 + a22) * ih2),
                (1, 0, a11 * ih2 + b[0] * i2h),
                (-1, 0, a11 * ih2 - b[0] * i2h),
                (0, 1, a22 * ih2 + b[1] * i2h),
                (0, -1, a22 * ih2 - b[1] * i2h),
                (1, 1, c12 * i4h2),
                (-1, -1, c12 * i4h2),
                (1, -1, -c12 * i4h2),
                (-1, 1, -c12 * i4h2),
            ];
            for (di, dj, w) in stencil {
                let (ii, jj) = ((i as isize + di) as usize, (j as isize + dj) as usize);
                if !g.is_boundary(ii, jj) && w != 0.0 {
                    jac.add(row, unknown(ii, jj), w);
                }
            }
        }
    }
    (jac, rhs)
}

/// Damped Newton iteration from `u0`; the boundary ring of `u0` is replaced
/// by the data. Each step is halved until the residual sup-norm decreases.
pub fn solve_newton<O: EllipticOperator>(
    inst: &ProblemInstance<O>,
    u0: &GridField,
    config: &NewtonConfig,
) -> Result<SolveReport, SolverError> {
    if !(config.tol > 0.0) {
        return Err(SolverError::Config(format!(
            "tolerance must be positive, got {}",
            config.tol
        )));
    }
    let g = inst.grid();
    if *u0.grid() != g || u0.components() != 1 {
        return Err(SolverError::Mismatch(
            "initial guess is not on the problem grid".into(),
        ));
    }
    let n = g.nodes();
    let m = n - 2;
    let mut u = u0.clone();
    for j in 0..n {
        for i in 0..n {
            if g.is_boundary(i, j) {
                u.set(i, j, inst.boundary.get(i, j));
            }
        }
    }
    let mut res = residual_sup(inst, &u);
    let mut report = SolveReport {
        solution: u.clone(),
        residual_history: vec![res],
        iterations: 0,
        converged: res <= config.tol,
        damping_events: 0,
        failure: None,
    };
    while !report.converged && report.iterations < config.max_iter {
        let (jac, mut delta) = assemble_jacobian(inst, &u);
        let lu = match jac.factor() {
            Ok(lu) => lu,
            Err(SingularPivot { column }) => {
                report.failure = Some(format!("singular Jacobian at unknown {column}"));
                break;
            }
        };
        lu.solve(&mut delta);
        let mut t = 1.0;
        let mut accepted = None;
        for halving in 0..=config.max_halvings {
            let mut trial = u.clone();
            for jj in 1..n - 1 {
                for ii in 1..n - 1 {
                    let k = (jj - 1) * m + (ii - 1);
                    trial.set(ii, jj, u.get(ii, jj) + t * delta[k]);
                }
            }
            let r = residual_sup(inst, &trial);
            if r < res || r <= config.tol {
                report.damping_events += halving;
                accepted = Some((trial, r));
                break;
            }
            t *= 0.5;
        }
        report.iterations += 1;
        match accepted {
            Some((trial, r)) => {
                u = trial;
                res = r;
                report.residual_history.push(r);
                report.converged = r <= config.tol;
            }
            None => {
                report.damping_events += config.max_halvings;
                report.failure = Some("no damped step reduced the residual".into());
                break;
            }
        }
    }
    if !report.converged && report.failure.is_none() {
        report.failure = Some(format!(
            "not converged after {} iterations",
            report.iterations
        ));
    }
    report.solution = u;
    Ok(report)
}

/// Solves `tr(A₀ D²u) = 0` with the boundary data of `boundary` in one
/// direct solve.
pub fn solve_linear_tangential(
    a0: &SymMatrix,
    boundary: &GridField,
) -> Result<GridField, SolverError> {
    let op = OperatorSpec::linear_trace(*a0)?;
    let g = *boundary.grid();
    let inst = ProblemInstance::new(
        op,
        GridField::zeros(g, 2),
        GridField::zeros(g, 1),
        boundary.clone(),
    )?;
    let u0 = inst.boundary_guess();
    let (jac, mut delta) = assemble_jacobian(&inst, &u0);
    let lu = jac.factor().map_err(|p| SolverError::Singular(p.column))?;
    lu.solve(&mut delta);
    let n = g.nodes();
    let m = n - 2;
    let mut u = u0;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            u.set(i, j, delta[(j - 1) * m + (i - 1)]);
        }
    }
    Ok(u)
}

/// Builds the instance whose exact solution is `u_star`: the source is
/// `F(D²u*, x) + ⟨B, Du*⟩` from analytic derivatives and the boundary data
/// is `u*` itself.
pub fn mms_generate<O: EllipticOperator>(
    op: O,
    drift: &Drift,
    u_star: &TestFunction,
    grid: GridParams,
) -> Result<ProblemInstance<O>, SolverError> {
    u_star.validate()?;
    let drift_field = drift.sample(grid);
    let n = grid.nodes();
    let mut source = GridField::zeros(grid, 1);
    for j in 0..n {
        for i in 0..n {
            let x = grid.point(i, j);
            let hs = u_star.hessian(x).map_err(|e| match e {
                FieldError::Evaluation { what } => FieldError::NodeEvaluation { i, j, what },
                e => e,
            })?;
            let gr = u_star.gradient(x)?;
            let b = drift.eval(x);
            let v = op.eval(&hs, &x) + b[0] * gr[0] + b[1] * gr[1];
            if !v.is_finite() {
                return Err(FieldError::NodeEvaluation {
                    i,
                    j,
                    what: "non-finite source".into(),
                }
                .into());
            }
            source.set(i, j, v);
        }
    }
    let boundary = GridField::from_fn(grid, |x| u_star.value(x))?;
    ProblemInstance::new(op, drift_field, source, boundary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub nodes: usize,
    pub h: f64,
    pub sup_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Observed orders `log(e_k/e_{k+1}) / log(h_k/h_{k+1})`; `None` when
    /// either error is at round-off level.
    pub orders: Vec<Option<f64>>,
    /// All errors at round-off level: the scheme reproduces `u*`.
    pub exact: bool,
    pub non_monotone: bool,
}

/// Error threshold below which a level counts as exact.
fn roundoff_level(u_scale: f64) -> f64 {
    1e-9 * u_scale.max(1.0)
}

/// Solves the manufactured problem on each grid (Newton from the boundary
/// data with zero interior) and tabulates sup errors against `u*`.
pub fn convergence_study<O: EllipticOperator + Clone>(
    op: &O,
    drift: &Drift,
    u_star: &TestFunction,
    nodes: &[usize],
    half_width: f64,
    config: &NewtonConfig,
) -> Result<ConvergenceStudy, SolverError> {
    if nodes.len() < 3 {
        return Err(SolverError::Config(
            "a convergence study needs at least three grids".into(),
        ));
    }
    let mut rows = Vec::with_capacity(nodes.len());
    let mut u_scale: f64 = 0.0;
    for &nn in nodes {
        let grid = GridParams::new(nn, half_width)?;
        let inst = mms_generate(op.clone(), drift, u_star, grid)?;
        let exact = GridField::from_fn(grid, |x| u_star.value(x))?;
        u_scale = u_scale.max(exact.sup_norm());
        let report = solve_newton(&inst, &inst.boundary_guess(), config)?;
        rows.push(ConvergenceRow {
            nodes: nn,
            h: grid.spacing(),
            sup_error: report.solution.sup_distance(&exact),
            iterations: report.iterations,
            converged: report.converged,
            final_residual: report.final_residual(),
        });
    }
    let floor = roundoff_level(u_scale);
    let orders = rows
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            (a.sup_error > floor && b.sup_error > floor)
                .then(|| (a.sup_error / b.sup_error).ln() / (a.h / b.h).ln())
        })
        .collect();
    let exact = rows.iter().all(|r| r.sup_error <= floor);
    let non_monotone = !exact && rows.windows(2).any(|w| w[1].sup_error > w[0].sup_error);
    Ok(ConvergenceStudy {
        rows,
        orders,
        exact,
        non_monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> GridParams {
        GridParams::new(n, 1.0).unwrap()
    }

    fn saddle() -> TestFunction {
        TestFunction::quadratic(SymMatrix::diag(&[2.0, -2.0]))
    }

    #[test]
    fn zero_problem_has_zero_residual() {
        let inst = mms_generate(
            OperatorSpec::perturbed_trace(2, 0.3).unwrap(),
            &Drift::Zero,
            &TestFunction::Zero,
            grid(9),
        )
        .unwrap();
        let r = discrete_residual(&inst, &GridField::zeros(grid(9), 1)).unwrap();
        assert_eq!(r.sup_norm(), 0.0);
    }

    #[test]
    fn mms_source_for_half_norm_squared_is_n() {
        let inst = mms_generate(
            OperatorSpec::laplacian(2),
            &Drift::Zero,
            &TestFunction::quadratic(SymMatrix::identity(2)),
            grid(9),
        )
        .unwrap();
        assert!(inst
            .source
            .values()
            .iter()
            .all(|&v| (v - 2.0).abs() < 1e-15));
    }

    #[test]
    fn harmonic_quadratic_in_one_step() {
        let inst = mms_generate(
            OperatorSpec::laplacian(2),
            &Drift::Zero,
            &saddle(),
            grid(33),
        )
        .unwrap();
        let rep = solve_newton(&inst, &inst.boundary_guess(), &NewtonConfig::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        let exact = sample(&saddle(), grid(33));
        assert!(rep.solution.sup_distance(&exact) < 1e-13);
    }

    fn sample(f: &TestFunction, g: GridParams) -> GridField {
        crate::fields::sample_function(f, g).unwrap()
    }

    #[test]
    fn tangential_solver_reproduces_admissible_quadratics() {
        let xy = TestFunction::polynomial(&[(1.0, 1, 1)]);
        let u = solve_linear_tangential(&SymMatrix::identity(2), &sample(&xy, grid(17))).unwrap();
        assert!(u.sup_distance(&sample(&xy, grid(17))) < 1e-13);

        // tr(A₀M) = 0 for A₀ = diag(1, 2), M = diag(2, −1).
        let a0 = SymMatrix::diag(&[1.0, 2.0]);
        let q = TestFunction::quadratic(SymMatrix::diag(&[2.0, -1.0]));
        let u = solve_linear_tangential(&a0, &sample(&q, grid(17))).unwrap();
        assert!(u.sup_distance(&sample(&q, grid(17))) < 1e-13);

        let z = solve_linear_tangential(&a0, &GridField::zeros(grid(17), 1)).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
    }

    #[test]
    fn nonlinear_mms_closes_from_exact_start() {
        let u_star =
            TestFunction::polynomial(&[(0.005, 2, 0), (-0.005, 0, 2), (0.01 / 12.0, 4, 0)]);
        let op = OperatorSpec::perturbed_trace(2, 0.05).unwrap();
        let inst = mms_generate(op, &Drift::Rotation { scale: 0.1 }, &u_star, grid(17)).unwrap();
        let exact = sample(&u_star, grid(17));
        let cfg = NewtonConfig::default();
        let rep = solve_newton(&inst, &exact, &cfg).unwrap();
        assert!(rep.converged && rep.iterations <= 2, "{rep:?}");
        let r = discrete_residual(&inst, &rep.solution).unwrap();
        assert!(sup_interior(&r) <= cfg.tol);
    }

    #[test]
    fn solver_is_deterministic() {
        let op = OperatorSpec::perturbed_trace(2, 0.5).unwrap();
        let u_star = TestFunction::polynomial(&[(0.3, 2, 1), (0.2, 0, 3)]);
        let inst = mms_generate(op, &Drift::Rotation { scale: 1.0 }, &u_star, grid(17)).unwrap();
        let a = solve_newton(&inst, &inst.boundary_guess(), &NewtonConfig::default()).unwrap();
        let b = solve_newton(&inst, &inst.boundary_guess(), &NewtonConfig::default()).unwrap();
        assert!(a.converged);
        assert_eq!(a.solution, b.solution);
        assert_eq!(a.residual_history, b.residual_history);
    }

    #[test]
    fn convergence_study_flags_exactness() {
        let s = convergence_study(
            &OperatorSpec::laplacian(2),
            &Drift::Zero,
            &saddle(),
            &[9, 17, 33],
            1.0,
            &NewtonConfig::default(),
        )
        .unwrap();
        assert!(s.exact);
        assert!(s.orders.iter().all(Option::is_none));
        assert!(convergence_study(
            &OperatorSpec::laplacian(2),
            &Drift::Zero,
            &saddle(),
            &[9, 17],
            1.0,
            &NewtonConfig::default()
        )
        .is_err());
    }
}
