use serde::{Deserialize, Serialize};

use super::{decay_audit, AuditConfig, CampanatoError};
use crate::fields::{GridParams, TestFunction};
use crate::moduli::Modulus;
use crate::operators::EllipticOperator;
use crate::solver::{mms_generate, solve_newton, Drift, NewtonConfig};

/// Manufactured problems `u*_δ = δ·shape` for a shape with sup norm one on
/// the unit ball, solved and audited at the grid centre.
#[derive(Clone, Debug)]
pub struct FlatnessFamily<O> {
    pub op: O,
    pub modulus: Modulus,
    pub shape: TestFunction,
    pub drift: Drift,
    pub grid: GridParams,
    /// `delta` is overwritten by each sampled amplitude.
    pub audit: AuditConfig,
    pub newton: NewtonConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessRow {
    pub delta: f64,
    pub solve_converged: bool,
    pub newton_iterations: usize,
    /// Largest normalized ratio of `w = u/δ` over the audited scales.
    pub max_ratio: f64,
    pub pass: bool,
    /// Added by bisection rather than taken from the sampled list.
    pub refined: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessTable {
    /// Rows sorted by amplitude.
    pub rows: Vec<FlatnessRow>,
    /// Largest amplitude below which every sampled amplitude passes.
    pub delta_star: f64,
    /// Passing amplitudes form an initial segment of the table.
    pub monotone: bool,
    pub all_pass: bool,
}

fn evaluate<O: EllipticOperator + Clone>(
    family: &FlatnessFamily<O>,
    delta: f64,
    refined: bool,
) -> FlatnessRow {
    let mut row = FlatnessRow {
        delta,
        solve_converged: false,
        newton_iterations: 0,
        max_ratio: f64::NAN,
        pass: false,
        refined,
        error: None,
    };
    let attempt = || -> Result<(bool, usize, f64), CampanatoError> {
        let u_star = family.shape.clone().scaled(delta);
        let inst = mms_generate(family.op.clone(), &family.drift, &u_star, family.grid)?;
        let report = solve_newton(&inst, &inst.boundary_guess(), &family.newton)?;
        let cfg = AuditConfig {
            delta,
            ..family.audit.clone()
        };
        let audit = decay_audit(
            &report.solution,
            &family.op,
            &family.modulus,
            &cfg,
            family.grid.center(),
        )?;
        let peak = audit.max_normalized_ratio();
        let ratio = if peak == 0.0 { 0.0 } else { peak / delta };
        Ok((report.converged, report.iterations, ratio))
    };
    match attempt() {
        Ok((converged, iterations, ratio)) => {
            row.solve_converged = converged;
            row.newton_iterations = iterations;
            row.max_ratio = ratio;
            row.pass = converged && ratio <= 1.0;
            if !converged {
                row.error = Some("Newton solve did not converge".into());
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Evaluates every sampled amplitude, then bisects `bisection_steps` times
/// between the last passing and the first failing amplitude.
pub fn flatness_threshold_search<O: EllipticOperator + Clone>(
    family: &FlatnessFamily<O>,
    deltas: &[f64],
    bisection_steps: usize,
) -> Result<FlatnessTable, CampanatoError> {
    if deltas.is_empty() || deltas.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
        return Err(CampanatoError::Config(
            "amplitudes must be a non-empty list of nonnegative reals".into(),
        ));
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut rows: Vec<FlatnessRow> = sorted.iter().map(|&d| evaluate(family, d, false)).collect();

    let first_fail = rows.iter().position(|r| !r.pass);
    let monotone = match first_fail {
        Some(k) => rows[k..].iter().all(|r| !r.pass),
        None => true,
    };
    let mut delta_star = match first_fail {
        Some(0) => 0.0,
        Some(k) => rows[k - 1].delta,
        None => rows.last().map_or(0.0, |r| r.delta),
    };
    if let Some(k) = first_fail {
        let mut lo = delta_star;
        let mut hi = rows[k].delta;
        let mut extra = Vec::with_capacity(bisection_steps);
        for _ in 0..bisection_steps {
            let mid = 0.5 * (lo + hi);
            let row = evaluate(family, mid, true);
            if row.pass {
                lo = mid;
            } else {
                hi = mid;
            }
            extra.push(row);
        }
        delta_star = lo;
        rows.extend(extra);
        rows.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(FlatnessTable {
        rows,
        delta_star,
        monotone,
        all_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::OperatorSpec;

    fn family<O>(op: O) -> FlatnessFamily<O> {
        FlatnessFamily {
            op,
            modulus: Modulus::power(1.0).unwrap(),
            shape: TestFunction::polynomial(&[(1.0, 2, 0), (-1.0, 0, 2)]),
            drift: Drift::Zero,
            grid: GridParams::new(129, 1.0).unwrap(),
            audit: AuditConfig::default(),
            newton: NewtonConfig::default(),
        }
    }

    #[test]
    fn linear_control_passes_everywhere() {
        let t = flatness_threshold_search(
            &family(OperatorSpec::laplacian(2)),
            &[0.0, 0.2, 0.5, 0.9],
            3,
        )
        .unwrap();
        assert!(t.all_pass && t.monotone);
        assert_eq!(t.delta_star, 0.9);
        assert_eq!(t.rows.len(), 4);
    }

    #[test]
    fn nonlinear_family_has_a_threshold() {
        let fam = family(OperatorSpec::perturbed_trace(2, 0.5).unwrap());
        let t = flatness_threshold_search(&fam, &[0.0, 0.1, 0.3, 0.5, 0.7, 0.9], 4).unwrap();
        assert!(t.monotone, "{t:#?}");
        assert!(!t.all_pass);
        assert!(t.delta_star > 0.0 && t.delta_star < 0.9);
        assert!(t.rows[0].pass);
    }
}
