use serde::Serialize;

use schauder_core::operators::{
    check_sc, oscillation_theta, scaling_family, tangential_limit, verify_ellipticity,
    EllipticOperator, EllipticityPair, EllipticityReport, ScReport, TangentialLimit,
};
use schauder_core::Verdict;

use super::config_err;
use crate::config::{ExperimentConfig, OperatorCheck};
use crate::output::{Artifacts, CheckResult, CommandOutput};
use crate::CliError;

#[derive(Serialize)]
struct TangentialOutcome {
    #[serde(skip_serializing_if = "Option::is_none")]
    limit: Option<TangentialLimit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct ThetaRow {
    x: Vec<f64>,
    theta: f64,
    argmax_norm: f64,
    samples: usize,
}

#[derive(Serialize)]
struct ThetaSummary {
    x0: Vec<f64>,
    theta: f64,
    points: Vec<ThetaRow>,
}

#[derive(Serialize)]
struct ScalingRow {
    sigma: f64,
    value: f64,
}

#[derive(Serialize)]
struct OperatorResult {
    dim: usize,
    pair: EllipticityPair,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ellipticity: Option<EllipticityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tangential: Option<TangentialOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sc: Option<ScReport>,
    theta: ThetaSummary,
    scaling: Vec<ScalingRow>,
}

#[derive(Serialize)]
struct MatrixRow {
    i: usize,
    j: usize,
    value: f64,
}

#[derive(Serialize)]
struct ThetaCsvRow {
    x1: f64,
    x2: f64,
    theta: f64,
}

pub fn run(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<CommandOutput, CliError> {
    let seed = cfg.seed.ok_or_else(|| {
        CliError::Config("sampled checks need a seed (`seed` in the config or --seed)".into())
    })?;
    let op = cfg.require_operator()?;
    let sec = cfg.operator_verify.clone().unwrap_or_default();
    let n = op.dim();
    let plan = &cfg.sampling;
    let wants = |c: OperatorCheck| sec.checks.contains(&c);
    let mut checks = Vec::new();

    let ellipticity = wants(OperatorCheck::Ellipticity).then(|| {
        let r = verify_ellipticity(op, plan);
        checks.push(CheckResult::new(
            "ellipticity",
            r.verdict.is_pass(),
            format!(
                "{} samples, worst violations {:.3e} below / {:.3e} above",
                r.samples, r.max_lower_violation, r.max_upper_violation
            ),
        ));
        r
    });

    let tangential = if wants(OperatorCheck::Tangential) {
        let outcome = match tangential_limit(op, &sec.tangential) {
            Ok(l) => {
                checks.push(CheckResult::new(
                    "tangential",
                    true,
                    format!(
                        "eigenvalues in [{:.9}, {:.9}]",
                        l.min_eigenvalue, l.max_eigenvalue
                    ),
                ));
                TangentialOutcome {
                    limit: Some(l),
                    error: None,
                }
            }
            Err(e) => {
                checks.push(CheckResult::new("tangential", false, e.to_string()));
                TangentialOutcome {
                    limit: None,
                    error: Some(e.to_string()),
                }
            }
        };
        Some(outcome)
    } else {
        None
    };

    let sc = wants(OperatorCheck::Sc).then(|| {
        let r = check_sc(op, plan, &sec.tangential);
        let verdicts = [
            ("convexity", r.convexity),
            ("F(O) = 0", r.vanishes_at_zero),
            ("trace minorant", r.trace_minorant),
            ("differentiable at O", r.f1_differentiable),
            ("1-homogeneous", r.f2_homogeneous),
        ];
        let failing: Vec<&str> = verdicts
            .iter()
            .filter(|(_, v)| *v != Verdict::Pass)
            .map(|(name, _)| *name)
            .collect();
        let detail = if failing.is_empty() {
            "all conditions hold on the sample".to_string()
        } else {
            format!("not satisfied: {}", failing.join(", "))
        };
        checks.push(CheckResult::new("sc", failing.is_empty(), detail));
        r
    });

    let x0 = sec.theta_x0.clone().unwrap_or_else(|| vec![0.0; n]);
    let points = sec.theta_points.clone().unwrap_or_else(|| plan.points(n));
    if x0.len() != n || points.iter().any(|p| p.len() != n) {
        return Err(config_err(format!(
            "theta points must have {n} coordinates"
        )));
    }
    let rows: Vec<ThetaRow> = points
        .iter()
        .map(|x| {
            let r = oscillation_theta(op, x, &x0, plan);
            ThetaRow {
                x: x.clone(),
                theta: r.theta,
                argmax_norm: r.argmax_norm,
                samples: r.samples,
            }
        })
        .collect();
    let theta = rows.iter().map(|r| r.theta).fold(0.0, f64::max);
    if wants(OperatorCheck::Theta) {
        let bound = sec
            .theta_max
            .ok_or_else(|| config_err("the theta check needs `theta_max`"))?;
        checks.push(CheckResult::new(
            "theta",
            theta <= bound,
            format!("sampled theta {theta:.6e} against {bound}"),
        ));
    }

    let scaling: Vec<ScalingRow> = match &sec.scaling_matrix {
        Some(xm) if xm.dim() != n => {
            return Err(config_err(format!("scaling_matrix must be {n}x{n}")))
        }
        Some(xm) => sec
            .scaling_sigmas
            .iter()
            .map(|&sigma| ScalingRow {
                sigma,
                value: scaling_family(op, sigma, xm, &x0),
            })
            .collect(),
        None => Vec::new(),
    };

    if let Some(l) = tangential.as_ref().and_then(|t| t.limit.as_ref()) {
        let rows: Vec<MatrixRow> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| MatrixRow {
                i,
                j,
                value: l.matrix.get(i, j),
            })
            .collect();
        art.write_csv("tangential.csv", &rows)?;
    }
    if n == 2 {
        let csv_rows: Vec<ThetaCsvRow> = rows
            .iter()
            .map(|r| ThetaCsvRow {
                x1: r.x[0],
                x2: r.x[1],
                theta: r.theta,
            })
            .collect();
        art.write_csv("theta.csv", &csv_rows)?;
    }
    if !scaling.is_empty() {
        art.write_csv("scaling.csv", &scaling)?;
    }

    let result = OperatorResult {
        dim: n,
        pair: op.pair(),
        seed,
        ellipticity,
        tangential,
        sc,
        theta: ThetaSummary {
            x0,
            theta,
            points: rows,
        },
        scaling,
    };
    CommandOutput::new(checks, &result)
}
