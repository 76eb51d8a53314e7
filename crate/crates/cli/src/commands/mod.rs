mod audit;
mod moduli;
mod operator;
mod solve;

use std::fmt::Display;

use schauder_core::campanato::CampanatoError;
use schauder_core::moduli::ModulusError;
use schauder_core::solver::SolverError;

use crate::config::ExperimentConfig;
use crate::output::{Artifacts, CommandOutput};
use crate::CliError;

pub fn dispatch(
    name: &str,
    cfg: &ExperimentConfig,
    art: &mut Artifacts,
) -> Result<CommandOutput, CliError> {
    match name {
        "moduli-check" => moduli::run(cfg, art),
        "operator-verify" => operator::run(cfg, art),
        "solve" => solve::run_solve(cfg, art),
        "mms" => solve::run_mms(cfg, art),
        "audit" => audit::run_audit(cfg, art),
        "flatness" => audit::run_flatness(cfg, art),
        other => Err(CliError::Config(format!("unknown subcommand {other}"))),
    }
}

fn config_err(e: impl Display) -> CliError {
    CliError::Config(e.to_string())
}

fn run_err(e: impl Display) -> CliError {
    CliError::Run(e.to_string())
}

fn modulus_err(e: ModulusError) -> CliError {
    match e {
        ModulusError::Config(_) | ModulusError::InvalidParams(_) | ModulusError::Domain { .. } => {
            config_err(e)
        }
        _ => run_err(e),
    }
}

fn solver_err(e: SolverError) -> CliError {
    match e {
        SolverError::Config(_) | SolverError::Mismatch(_) => config_err(e),
        _ => run_err(e),
    }
}

fn campanato_err(e: CampanatoError) -> CliError {
    match e {
        CampanatoError::Config(_) => config_err(e),
        _ => run_err(e),
    }
}
