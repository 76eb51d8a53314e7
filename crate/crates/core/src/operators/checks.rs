//! Sampled structural checks on operators: ellipticity, derivatives at the
//! origin, the blow-down family, coefficient oscillation and the convexity and scaling checklist.

use serde::{Deserialize, Serialize};

use super::{pucci_minus, pucci_plus, EllipticOperator, OperatorError, SymMatrix, MATRIX_NORM};
use crate::sampling::{random_psd, SamplePlan};
use crate::Verdict;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub verdict: Verdict,
    /// Largest amount by which `F(M+N) − F(M)` fell below `𝒫⁻(N)`.
    pub max_lower_violation: f64,
    /// Largest amount by which `F(M+N) − F(M)` exceeded `𝒫⁺(N)`.
    pub max_upper_violation: f64,
    pub worst_m: Option<SymMatrix>,
    pub worst_n: Option<SymMatrix>,
    pub samples: usize,
    pub tolerance: f64,
    pub norm: String,
}

/// Checks `𝒫⁻(N) <= F(M+N, x) − F(M, x) <= 𝒫⁺(N)` on every sampled triple
/// with `N >= 0`. Violations are measured relative to `1 + |F(M+N)| + |F(M)|`.
pub fn verify_ellipticity(op: &impl EllipticOperator, plan: &SamplePlan) -> EllipticityReport {
    let n = op.dim();
    let pair = op.pair();
    let tolerance = 1e-10;
    let ms = plan.matrices(n);
    let xs = plan.points(n);
    let mut rng = plan.rng();
    let mut report = EllipticityReport {
        verdict: Verdict::Pass,
        max_lower_violation: 0.0,
        max_upper_violation: 0.0,
        worst_m: None,
        worst_n: None,
        samples: 0,
        tolerance,
        norm: MATRIX_NORM.into(),
    };
    let mut worst = 0.0;
    for (idx, m) in ms.iter().enumerate() {
        let scale = if idx % 3 == 0 { 0.05 } else { plan.scale };
        let psd = random_psd(&mut rng, n, scale);
        for x in &xs {
            let f0 = op.eval(m, x);
            let f1 = op.eval(&(*m + psd), x);
            let inc = f1 - f0;
            let rel = 1.0 + f0.abs() + f1.abs();
            let lower = (pucci_minus(&psd, pair) - inc) / rel;
            let upper = (inc - pucci_plus(&psd, pair)) / rel;
            report.max_lower_violation = report.max_lower_violation.max(lower);
            report.max_upper_violation = report.max_upper_violation.max(upper);
            if lower.max(upper) > worst {
                worst = lower.max(upper);
                report.worst_m = Some(*m);
                report.worst_n = Some(psd);
            }
            report.samples += 1;
        }
    }
    if worst > tolerance {
        report.verdict = Verdict::Fail;
    }
    report
}

/// Central difference `(F(X0 + hM, x) − F(X0 − hM, x)) / 2h`.
pub fn gateaux(
    op: &impl EllipticOperator,
    x0: &SymMatrix,
    m: &SymMatrix,
    x: &[f64],
    h: f64,
) -> f64 {
    (op.eval(&(*x0 + h * *m), x) - op.eval(&(*x0 - h * *m), x)) / (2.0 * h)
}

/// `𝒢_σ(X) = F(σX, x) / σ`.
pub fn scaling_family(op: &impl EllipticOperator, sigma: f64, x_mat: &SymMatrix, x: &[f64]) -> f64 {
    op.eval(&(sigma * *x_mat), x) / sigma
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TangentialPlan {
    /// Decreasing step ladder, consecutive ratio constant.
    pub steps: Vec<f64>,
    /// Agreement required between consecutive Richardson extrapolants.
    pub extrapolation_tol: f64,
    /// Allowed gap between forward and backward differences at the
    /// smallest step, relative to `1 + |derivative|`.
    pub one_sided_tol: f64,
    /// Slack on the bracket `λ Id <= 𝔄₀ <= Λ Id`.
    pub bracket_tol: f64,
    /// Point at which the derivative is taken.
    pub x: Option<Vec<f64>>,
}

impl Default for TangentialPlan {
    fn default() -> Self {
        TangentialPlan {
            steps: vec![1e-2, 1e-3, 1e-4],
            extrapolation_tol: 1e-7,
            one_sided_tol: 1e-2,
            bracket_tol: 1e-6,
            x: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentialLimit {
    pub matrix: SymMatrix,
    /// Largest disagreement between consecutive extrapolants over the basis.
    pub extrapolation_gap: f64,
    /// Largest forward/backward disagreement at the smallest step.
    pub one_sided_gap: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub norm: String,
}

/// Assembles `𝔄₀` from Gâteaux derivatives at `O_n` along the symmetric
/// basis, Richardson-extrapolated over the step ladder. An off-diagonal
/// basis element carries both `(i,j)` and `(j,i)`, so its derivative is
/// halved.
pub fn tangential_limit(
    op: &impl EllipticOperator,
    plan: &TangentialPlan,
) -> Result<TangentialLimit, OperatorError> {
    let n = op.dim();
    if plan.steps.len() < 3 || plan.steps.windows(2).any(|w| !(w[1] > 0.0 && w[1] < w[0])) {
        return Err(OperatorError::Invalid(
            "tangential plan needs at least three decreasing positive steps".into(),
        ));
    }
    let x = plan.x.clone().unwrap_or_else(|| vec![0.0; n]);
    let zero = SymMatrix::zeros(n);
    let f0 = op.eval(&zero, &x);
    let h_min = *plan.steps.last().expect("non-empty ladder");
    let mut matrix = SymMatrix::zeros(n);
    let mut extrapolation_gap: f64 = 0.0;
    let mut one_sided_gap: f64 = 0.0;

    for i in 0..n {
        for j in i..n {
            let e = SymMatrix::basis(n, i, j);
            let d: Vec<f64> = plan
                .steps
                .iter()
                .map(|&h| gateaux(op, &zero, &e, &x, h))
                .collect();
            let extrap: Vec<f64> = plan
                .steps
                .windows(2)
                .zip(d.windows(2))
                .map(|(h, d)| {
                    let q = (h[0] / h[1]).powi(2);
                    (q * d[1] - d[0]) / (q - 1.0)
                })
                .collect();
            let gap = extrap
                .windows(2)
                .map(|w| (w[1] - w[0]).abs())
                .fold(0.0, f64::max);
            let value = *extrap.last().expect("at least two extrapolants");
            extrapolation_gap = extrapolation_gap.max(gap);

            let forward = (op.eval(&(h_min * e), &x) - f0) / h_min;
            let backward = (f0 - op.eval(&(-h_min * e), &x)) / h_min;
            let os = (forward - backward).abs() / (1.0 + value.abs());
            one_sided_gap = one_sided_gap.max(os);

            if os > plan.one_sided_tol {
                return Err(OperatorError::NotDifferentiable(format!(
                    "forward and backward differences along E({i},{j}) are {forward} and {backward}"
                )));
            }
            if gap >= plan.extrapolation_tol {
                return Err(OperatorError::NotDifferentiable(format!(
                    "Richardson extrapolants along E({i},{j}) differ by {gap:e}"
                )));
            }
            matrix.set(i, j, if i == j { value } else { 0.5 * value });
        }
    }
    let ev = matrix.eigenvalues();
    let (min, max) = (ev[0], ev[n - 1]);
    let pair = op.pair();
    if min < pair.lambda - plan.bracket_tol || max > pair.big_lambda + plan.bracket_tol {
        return Err(OperatorError::LimitOutOfBounds { min, max });
    }
    Ok(TangentialLimit {
        matrix,
        extrapolation_gap,
        one_sided_gap,
        min_eigenvalue: min,
        max_eigenvalue: max,
        norm: MATRIX_NORM.into(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaReport {
    /// Sampled maximum of `|F(X,x) − F(X,x0)| / (1 + ‖X‖)`: a lower bound
    /// for the supremum over `Sym(n)`.
    pub theta: f64,
    pub argmax_norm: f64,
    pub samples: usize,
    pub norm: String,
}

pub fn oscillation_theta(
    op: &impl EllipticOperator,
    x: &[f64],
    x0: &[f64],
    plan: &SamplePlan,
) -> ThetaReport {
    let mut report = ThetaReport {
        theta: 0.0,
        argmax_norm: 0.0,
        samples: 0,
        norm: MATRIX_NORM.into(),
    };
    if op.is_x_independent() {
        return report;
    }
    for m in plan.matrices(op.dim()) {
        let v = (op.eval(&m, x) - op.eval(&m, x0)).abs() / (1.0 + m.frobenius());
        if v > report.theta {
            report.theta = v;
            report.argmax_norm = m.frobenius();
        }
        report.samples += 1;
    }
    report
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScReport {
    pub convexity: Verdict,
    /// `(X, Y, F((X+Y)/2) − (F(X)+F(Y))/2)` for the worst sampled pair.
    pub convexity_witness: Option<(SymMatrix, SymMatrix, f64)>,
    pub vanishes_at_zero: Verdict,
    pub trace_minorant: Verdict,
    pub trace_witness: Option<(SymMatrix, f64)>,
    pub f1_differentiable: Verdict,
    pub f1_detail: String,
    pub f2_homogeneous: Verdict,
    pub f2_max_defect: f64,
    pub samples: usize,
    pub norm: String,
}

const SC_TOL: f64 = 1e-10;
const HOMOGENEITY_FACTORS: [f64; 5] = [0.1, 0.5, 2.0, 3.7, 10.0];

/// Sampled structural checklist at `x = 0`: midpoint convexity, `F(O) = 0`,
/// `tr X <= F(X)`, differentiability at `O` and positive 1-homogeneity.
pub fn check_sc(
    op: &impl EllipticOperator,
    plan: &SamplePlan,
    tangential: &TangentialPlan,
) -> ScReport {
    let n = op.dim();
    let x = vec![0.0; n];
    let ms = plan.matrices(n);
    let f = |m: &SymMatrix| op.eval(m, &x);

    let mut worst_mid: Option<(SymMatrix, SymMatrix, f64)> = None;
    let mut worst_trace: Option<(SymMatrix, f64)> = None;
    let mut f2_max_defect: f64 = 0.0;
    for (k, a) in ms.iter().enumerate() {
        let b = &ms[(k * 7 + 1) % ms.len()];
        let (fa, fb) = (f(a), f(b));
        let gap = f(&(0.5 * (*a + *b))) - 0.5 * (fa + fb);
        if gap > SC_TOL * (1.0 + fa.abs() + fb.abs())
            && worst_mid.as_ref().is_none_or(|w| gap > w.2)
        {
            worst_mid = Some((*a, *b, gap));
        }
        let tgap = a.trace() - fa;
        if tgap > SC_TOL * (1.0 + fa.abs()) && worst_trace.as_ref().is_none_or(|w| tgap > w.1) {
            worst_trace = Some((*a, tgap));
        }
        for mu in HOMOGENEITY_FACTORS {
            let d = (f(&(mu * *a)) - mu * fa).abs() / (1.0 + (mu * fa).abs());
            f2_max_defect = f2_max_defect.max(d);
        }
    }
    let (f1, f1_detail) = match tangential_limit(op, tangential) {
        Ok(t) => (
            Verdict::Pass,
            format!(
                "limit eigenvalues in [{}, {}]",
                t.min_eigenvalue, t.max_eigenvalue
            ),
        ),
        Err(e) => (Verdict::Fail, e.to_string()),
    };
    ScReport {
        convexity: Verdict::from_bool(worst_mid.is_none()),
        convexity_witness: worst_mid,
        vanishes_at_zero: Verdict::from_bool(f(&SymMatrix::zeros(n)).abs() <= SC_TOL),
        trace_minorant: Verdict::from_bool(worst_trace.is_none()),
        trace_witness: worst_trace,
        f1_differentiable: f1,
        f1_detail,
        f2_homogeneous: Verdict::from_bool(f2_max_defect <= SC_TOL),
        f2_max_defect,
        samples: ms.len(),
        norm: MATRIX_NORM.into(),
    }
}
