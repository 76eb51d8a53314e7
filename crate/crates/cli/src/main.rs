//! `schauder`: batch runner for the schauder-core experiments.
//!
//! Every subcommand reads one TOML config, writes `report.toml` (with the
//! resolved config embedded) and its CSV tables or field files into `--out`,
//! and exits 0 when all requested checks pass, 1 when a check fails or the
//! computation breaks down, and 2 on configuration or I/O errors.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::ExperimentConfig;
use output::Artifacts;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("run failed: {0}")]
    Run(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Run(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "schauder",
    version,
    about = "Numerical checks for flat solutions of fully nonlinear elliptic equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seed for sampled checks, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Dini integral, almost-concavity, limiting-compatibility and Hölder reports for a modulus.
    ModuliCheck(Common),
    /// Ellipticity, tangential limit, structural conditions and coefficient oscillation of an operator.
    OperatorVerify(Common),
    /// Newton solve of one discrete problem.
    Solve(Common),
    /// Manufactured-solution convergence study.
    Mms(Common),
    /// Dyadic decay audit of a field.
    Audit(Common),
    /// Flatness threshold table over amplitudes.
    Flatness(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::ModuliCheck(c) => ("moduli-check", c),
            Command::OperatorVerify(c) => ("operator-verify", c),
            Command::Solve(c) => ("solve", c),
            Command::Mms(c) => ("mms", c),
            Command::Audit(c) => ("audit", c),
            Command::Flatness(c) => ("flatness", c),
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let (name, common) = cli.command.parts();
    let mut cfg = ExperimentConfig::load(&common.config)?;
    cfg.apply_seed(common.seed);
    let mut artifacts = Artifacts::create(&common.out)?;
    let outcome = commands::dispatch(name, &cfg, &mut artifacts);
    match outcome {
        Ok(out) => {
            artifacts.write_report(name, &cfg, Ok(&out))?;
            for c in &out.checks {
                println!("check {}: {} ({})", c.name, c.verdict, c.detail);
            }
            println!("{name}: {}", if out.passed() { "pass" } else { "fail" });
            Ok(out.passed())
        }
        Err(e @ CliError::Run(_)) => {
            artifacts.write_report(name, &cfg, Err(&e))?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("schauder: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
