use serde::Serialize;

use schauder_core::fields::{sample_function, GridField};
use schauder_core::solver::{convergence_study, mms_generate, solve_newton, ProblemInstance};

use super::{config_err, solver_err};
use crate::config::ExperimentConfig;
use crate::output::{Artifacts, CheckResult, CommandOutput};
use crate::CliError;

#[derive(Serialize)]
struct SolveResult {
    nodes: usize,
    h: f64,
    iterations: usize,
    converged: bool,
    damping_events: usize,
    final_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sup_error: Option<f64>,
}

#[derive(Serialize)]
struct ResidualRow {
    iteration: usize,
    residual: f64,
}

pub fn run_solve(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<CommandOutput, CliError> {
    let op = cfg.require_operator()?.clone();
    let grid = cfg.require_grid()?;
    let sec = cfg
        .solve
        .as_ref()
        .ok_or_else(|| config_err("missing [solve] section"))?;

    let (inst, exact) = match (&sec.manufactured, &sec.source, &sec.boundary) {
        (Some(u), None, None) => {
            let inst = mms_generate(op, &sec.drift, u, grid).map_err(solver_err)?;
            let exact = GridField::from_fn(grid, |x| u.value(x)).map_err(config_err)?;
            (inst, Some(exact))
        }
        (None, Some(f), Some(g)) => {
            let source = sample_function(f, grid).map_err(config_err)?;
            let boundary = sample_function(g, grid).map_err(config_err)?;
            let inst = ProblemInstance::new(op, sec.drift.sample(grid), source, boundary)
                .map_err(solver_err)?;
            (inst, None)
        }
        _ => {
            return Err(config_err(
                "[solve] needs either `manufactured` or both `source` and `boundary`",
            ))
        }
    };
    if sec.max_error.is_some() && exact.is_none() {
        return Err(config_err("`max_error` needs a manufactured solution"));
    }

    let report = solve_newton(&inst, &inst.boundary_guess(), &cfg.newton).map_err(solver_err)?;
    let sup_error = exact.as_ref().map(|e| report.solution.sup_distance(e));

    let mut checks = vec![CheckResult::new(
        "converged",
        report.converged,
        format!(
            "{} Newton iterations, final residual {:.3e}",
            report.iterations,
            report.final_residual()
        ),
    )];
    if let (Some(bound), Some(err)) = (sec.max_error, sup_error) {
        checks.push(CheckResult::new(
            "error",
            err <= bound,
            format!("sup error {err:.3e} against {bound}"),
        ));
    }

    art.write_field("solution.field", &report.solution)?;
    let rows: Vec<ResidualRow> = report
        .residual_history
        .iter()
        .enumerate()
        .map(|(iteration, &residual)| ResidualRow {
            iteration,
            residual,
        })
        .collect();
    art.write_csv("residuals.csv", &rows)?;

    let result = SolveResult {
        nodes: grid.nodes(),
        h: grid.spacing(),
        iterations: report.iterations,
        converged: report.converged,
        damping_events: report.damping_events,
        final_residual: report.final_residual(),
        failure: report.failure.clone(),
        sup_error,
    };
    CommandOutput::new(checks, &result)
}

#[derive(Serialize)]
struct MmsRow {
    nodes: usize,
    h: f64,
    sup_error: f64,
    iterations: usize,
    converged: bool,
    final_residual: f64,
    /// Observed order against the previous (coarser) level.
    order: Option<f64>,
}

#[derive(Serialize)]
struct MmsResult {
    rows: Vec<MmsRow>,
    exact: bool,
    non_monotone: bool,
    min_order: f64,
}

pub fn run_mms(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<CommandOutput, CliError> {
    let op = cfg.require_operator()?;
    let sec = cfg
        .mms
        .as_ref()
        .ok_or_else(|| config_err("missing [mms] section"))?;
    let study = convergence_study(
        op,
        &sec.drift,
        &sec.u_star,
        &sec.nodes,
        sec.half_width,
        &cfg.newton,
    )
    .map_err(solver_err)?;

    let rows: Vec<MmsRow> = study
        .rows
        .iter()
        .enumerate()
        .map(|(k, r)| MmsRow {
            nodes: r.nodes,
            h: r.h,
            sup_error: r.sup_error,
            iterations: r.iterations,
            converged: r.converged,
            final_residual: r.final_residual,
            order: k.checked_sub(1).and_then(|p| study.orders[p]),
        })
        .collect();

    let all_converged = rows.iter().all(|r| r.converged);
    let mut checks = vec![CheckResult::new(
        "converged",
        all_converged,
        format!(
            "{} of {} levels converged",
            rows.iter().filter(|r| r.converged).count(),
            rows.len()
        ),
    )];
    let orders: Vec<Option<f64>> = study.orders.clone();
    let order_ok = study.exact || orders.iter().all(|o| o.is_some_and(|p| p >= sec.min_order));
    let detail = if study.exact {
        "errors at round-off on every level".to_string()
    } else {
        let shown: Vec<String> = orders
            .iter()
            .map(|o| o.map_or("n/a".into(), |p| format!("{p:.4}")))
            .collect();
        format!(
            "observed orders [{}] against {}",
            shown.join(", "),
            sec.min_order
        )
    };
    checks.push(CheckResult::new("order", order_ok, detail));
    if let Some(cap) = sec.max_iterations {
        let worst = rows.iter().map(|r| r.iterations).max().unwrap_or(0);
        checks.push(CheckResult::new(
            "iterations",
            worst <= cap,
            format!("at most {worst} Newton iterations per level against {cap}"),
        ));
    }

    art.write_csv("convergence.csv", &rows)?;
    let finest = study
        .rows
        .last()
        .map(|r| r.nodes)
        .expect("a study has levels");
    let grid =
        schauder_core::fields::GridParams::new(finest, sec.half_width).map_err(config_err)?;
    let inst = mms_generate(op.clone(), &sec.drift, &sec.u_star, grid).map_err(solver_err)?;
    art.write_field("source.field", &inst.source)?;
    art.write_field("boundary.field", &inst.boundary)?;
    art.write_field("drift.field", &inst.drift)?;

    let result = MmsResult {
        rows,
        exact: study.exact,
        non_monotone: study.non_monotone,
        min_order: sec.min_order,
    };
    CommandOutput::new(checks, &result)
}
