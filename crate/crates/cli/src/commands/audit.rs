use std::fs::File;
use std::io::BufReader;

use serde::Serialize;

use schauder_core::campanato::{
    c2psi_seminorm, decay_audit, fit_decay_exponent, flatness_threshold_search, DecayAudit,
    DecayExponent, FlatnessFamily, FlatnessRow, FlatnessTable, SeminormReport,
};
use schauder_core::fields::{sample_function, GridField};

use super::{campanato_err, config_err};
use crate::config::ExperimentConfig;
use crate::output::{Artifacts, CheckResult, CommandOutput};
use crate::CliError;

#[derive(Serialize)]
struct CenterAudit {
    point: [f64; 2],
    node: (usize, usize),
    audit: DecayAudit,
    exponent: DecayExponent,
    #[serde(skip_serializing_if = "Option::is_none")]
    seminorm: Option<SeminormReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seminorm_note: Option<String>,
}

#[derive(Serialize)]
struct AuditResult {
    nodes: usize,
    half_width: f64,
    centers: Vec<CenterAudit>,
}

#[derive(Serialize)]
struct AuditRow {
    x1: f64,
    x2: f64,
    k: usize,
    radius: f64,
    sup_residual: f64,
    normalized_ratio: Option<f64>,
    hessian_increment: Option<f64>,
    increment_ratio: Option<f64>,
    constraint_residual: f64,
}

fn load_field(cfg: &ExperimentConfig, art: &Artifacts) -> Result<GridField, CliError> {
    let sec = &cfg.audit;
    match (&sec.function, &sec.field_file) {
        (Some(f), None) => sample_function(f, cfg.require_grid()?).map_err(config_err),
        (None, Some(path)) => {
            let full = art.resolve(path);
            let file = File::open(&full)
                .map_err(|e| config_err(format!("cannot open {}: {e}", full.display())))?;
            let field = GridField::read_from(BufReader::new(file)).map_err(config_err)?;
            if field.components() != 1 {
                return Err(config_err("the audited field must be scalar"));
            }
            Ok(field)
        }
        _ => Err(config_err(
            "[audit] needs exactly one of `function` and `field_file`",
        )),
    }
}

/// Normalized ratios must not grow from one scale to the next (up to
/// round-off when they are already at zero).
fn nonincreasing(ratios: &[f64]) -> bool {
    ratios
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14)
}

pub fn run_audit(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<CommandOutput, CliError> {
    let op = cfg.require_operator()?;
    let modulus = cfg.require_modulus()?;
    let sec = &cfg.audit;
    let u = load_field(cfg, art)?;
    let grid = *u.grid();
    let config = sec.core_config();
    if sec.centers.is_empty() {
        return Err(config_err("[audit] needs at least one center"));
    }

    let mut checks = Vec::new();
    let mut centers = Vec::with_capacity(sec.centers.len());
    let mut rows = Vec::new();
    for &point in &sec.centers {
        let node = grid
            .nearest_node(point)
            .ok_or_else(|| config_err(format!("center {point:?} lies outside the grid")))?;
        let snapped = grid.point(node.0, node.1);
        let audit = decay_audit(&u, op, modulus, &config, node).map_err(campanato_err)?;
        let exponent = fit_decay_exponent(&audit);
        let (seminorm, seminorm_note) = if modulus.is_dini(config.psi_rel_tol) {
            match c2psi_seminorm(&u, &audit, modulus) {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            }
        } else {
            (None, Some("modulus is not Dini".into()))
        };

        let label = format!("({}, {})", snapped[0], snapped[1]);
        let ratios: Vec<f64> = audit
            .records
            .iter()
            .filter_map(|r| r.normalized_ratio)
            .collect();
        if sec.require_decreasing {
            checks.push(CheckResult::new(
                format!("decreasing {label}"),
                nonincreasing(&ratios),
                format!(
                    "normalized ratios [{}]",
                    ratios
                        .iter()
                        .map(|r| format!("{r:.6e}"))
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            ));
        }
        if sec.require_within_delta {
            checks.push(CheckResult::new(
                format!("within_delta {label}"),
                audit.within_delta,
                format!(
                    "largest ratio {:.6e} against delta {}",
                    audit.max_normalized_ratio(),
                    config.delta
                ),
            ));
        }
        if let Some([lo, hi]) = sec.alpha_range {
            let ok = exponent.alpha_hat.is_some_and(|a| (lo..=hi).contains(&a));
            let detail = exponent
                .alpha_hat
                .map_or("too few nonzero residuals".into(), |a| {
                    format!("fitted exponent {a:.6} against [{lo}, {hi}]")
                });
            checks.push(CheckResult::new(format!("exponent {label}"), ok, detail));
        }

        rows.extend(audit.records.iter().map(|r| AuditRow {
            x1: snapped[0],
            x2: snapped[1],
            k: r.k,
            radius: r.radius,
            sup_residual: r.sup_residual,
            normalized_ratio: r.normalized_ratio,
            hessian_increment: r.hessian_increment,
            increment_ratio: r.increment_ratio,
            constraint_residual: r.constraint_residual,
        }));
        centers.push(CenterAudit {
            point: snapped,
            node,
            audit,
            exponent,
            seminorm,
            seminorm_note,
        });
    }
    art.write_csv("audit.csv", &rows)?;
    let result = AuditResult {
        nodes: grid.nodes(),
        half_width: grid.half_width(),
        centers,
    };
    CommandOutput::new(checks, &result)
}

#[derive(Serialize)]
struct FlatnessResult {
    operator: FlatnessTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    control: Option<FlatnessTable>,
}

#[derive(Serialize)]
struct FlatnessCsvRow<'a> {
    family: &'a str,
    delta: f64,
    solve_converged: bool,
    newton_iterations: usize,
    max_ratio: f64,
    pass: bool,
    refined: bool,
    error: Option<&'a str>,
}

impl<'a> FlatnessCsvRow<'a> {
    fn new(family: &'a str, row: &'a FlatnessRow) -> Self {
        FlatnessCsvRow {
            family,
            delta: row.delta,
            solve_converged: row.solve_converged,
            newton_iterations: row.newton_iterations,
            max_ratio: row.max_ratio,
            pass: row.pass,
            refined: row.refined,
            error: row.error.as_deref(),
        }
    }
}

pub fn run_flatness(
    cfg: &ExperimentConfig,
    art: &mut Artifacts,
) -> Result<CommandOutput, CliError> {
    let op = cfg.require_operator()?;
    let modulus = cfg.require_modulus()?;
    let grid = cfg.require_grid()?;
    let sec = cfg
        .flatness
        .as_ref()
        .ok_or_else(|| config_err("missing [flatness] section"))?;
    let family = FlatnessFamily {
        op: op.clone(),
        modulus: modulus.clone(),
        shape: sec.shape.clone(),
        drift: sec.drift.clone(),
        grid,
        audit: cfg.audit.core_config(),
        newton: cfg.newton,
    };
    let table = flatness_threshold_search(&family, &sec.deltas, sec.bisection_steps)
        .map_err(campanato_err)?;
    let control = match &sec.control {
        Some(c) => {
            let fam = FlatnessFamily {
                op: c.clone(),
                ..family.clone()
            };
            Some(
                flatness_threshold_search(&fam, &sec.deltas, sec.bisection_steps)
                    .map_err(campanato_err)?,
            )
        }
        None => None,
    };

    let mut checks = vec![CheckResult::new(
        "monotone",
        table.monotone,
        format!(
            "delta* = {} over {} rows, {} passing",
            table.delta_star,
            table.rows.len(),
            table.rows.iter().filter(|r| r.pass).count()
        ),
    )];
    if let Some(c) = &control {
        let failing: Vec<f64> = c.rows.iter().filter(|r| !r.pass).map(|r| r.delta).collect();
        checks.push(CheckResult::new(
            "control",
            c.all_pass,
            if failing.is_empty() {
                "control passes at every delta".into()
            } else {
                format!("control fails at delta {failing:?}")
            },
        ));
    }

    let mut rows: Vec<FlatnessCsvRow> = table
        .rows
        .iter()
        .map(|row| FlatnessCsvRow::new("operator", row))
        .collect();
    if let Some(c) = &control {
        rows.extend(c.rows.iter().map(|row| FlatnessCsvRow::new("control", row)));
    }
    art.write_csv("flatness.csv", &rows)?;

    let result = FlatnessResult {
        operator: table.clone(),
        control: control.clone(),
    };
    CommandOutput::new(checks, &result)
}
