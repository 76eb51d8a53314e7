//! Experiment configuration read from TOML.
//!
//! One file drives any subcommand; each subcommand reads the shared sections
//! it needs (`modulus`, `operator`, `grid`, `newton`, `audit`, `sampling`)
//! plus its own section.

use std::path::Path;

use serde::{Deserialize, Serialize};

use schauder_core::campanato::AuditConfig;
use schauder_core::fields::{GridParams, TestFunction};
use schauder_core::moduli::{A4Plan, HolderPlan, Modulus, RatioPlan};
use schauder_core::operators::{OperatorSpec, SymMatrix, TangentialPlan};
use schauder_core::sampling::SamplePlan;
use schauder_core::solver::{Drift, NewtonConfig};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for every sampled supremum; `--seed` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<Modulus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridParams>,
    #[serde(default)]
    pub newton: NewtonConfig,
    #[serde(default)]
    pub sampling: SamplePlan,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moduli_check: Option<ModuliCheckSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator_verify: Option<OperatorVerifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mms: Option<MmsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flatness: Option<FlatnessSection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuliCheck {
    Dini,
    A4,
    Lcc,
    SOverTau,
}

fn default_moduli_checks() -> Vec<ModuliCheck> {
    vec![
        ModuliCheck::Dini,
        ModuliCheck::A4,
        ModuliCheck::Lcc,
        ModuliCheck::SOverTau,
    ]
}

fn default_alpha0() -> f64 {
    0.5
}

fn default_rel_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuliCheckSection {
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    #[serde(default = "default_moduli_checks")]
    pub checks: Vec<ModuliCheck>,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    /// Points at which ψ is tabulated.
    #[serde(default)]
    pub psi_points: Vec<f64>,
    /// Exponents compared against the modulus; reported, never judged.
    #[serde(default)]
    pub holder_gammas: Vec<f64>,
    #[serde(default)]
    pub a4: A4Plan,
    #[serde(default)]
    pub ratio: RatioPlan,
    #[serde(default)]
    pub holder: HolderPlan,
}

impl Default for ModuliCheckSection {
    fn default() -> Self {
        ModuliCheckSection {
            alpha0: default_alpha0(),
            checks: default_moduli_checks(),
            rel_tol: default_rel_tol(),
            psi_points: Vec::new(),
            holder_gammas: Vec::new(),
            a4: A4Plan::default(),
            ratio: RatioPlan::default(),
            holder: HolderPlan::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorCheck {
    Ellipticity,
    Tangential,
    Sc,
    Theta,
}

fn default_operator_checks() -> Vec<OperatorCheck> {
    vec![OperatorCheck::Ellipticity, OperatorCheck::Tangential]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorVerifySection {
    #[serde(default = "default_operator_checks")]
    pub checks: Vec<OperatorCheck>,
    #[serde(default)]
    pub tangential: TangentialPlan,
    /// Reference point for the oscillation θ; defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_x0: Option<Vec<f64>>,
    /// Points compared against `theta_x0`; defaults to the sample plan's points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_points: Option<Vec<Vec<f64>>>,
    /// Required for the `theta` check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_max: Option<f64>,
    /// Tabulates `F(σX)/σ` for this `X` over `scaling_sigmas`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling_matrix: Option<SymMatrix>,
    #[serde(default)]
    pub scaling_sigmas: Vec<f64>,
}

impl Default for OperatorVerifySection {
    fn default() -> Self {
        OperatorVerifySection {
            checks: default_operator_checks(),
            tangential: TangentialPlan::default(),
            theta_x0: None,
            theta_points: None,
            theta_max: None,
            scaling_matrix: None,
            scaling_sigmas: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    /// Exact solution; the source and boundary data are generated from it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manufactured: Option<TestFunction>,
    /// Right-hand side sampled on the grid when `manufactured` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<TestFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<TestFunction>,
    #[serde(default)]
    pub drift: Drift,
    /// Largest accepted sup error against `manufactured`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_error: Option<f64>,
}

fn default_levels() -> Vec<usize> {
    vec![33, 65, 129]
}

fn default_min_order() -> f64 {
    1.8
}

fn default_half_width() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsSection {
    pub u_star: TestFunction,
    #[serde(default)]
    pub drift: Drift,
    #[serde(default = "default_levels")]
    pub nodes: Vec<usize>,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_min_order")]
    pub min_order: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

fn default_centers() -> Vec<[f64; 2]> {
    vec![[0.0, 0.0]]
}

fn yes() -> bool {
    true
}

/// Audit parameters shared by `audit` and `flatness`, plus the field that
/// `audit` inspects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    #[serde(default)]
    pub rho0: Option<f64>,
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub psi_rel_tol: Option<f64>,
    /// Points snapped to the nearest grid node.
    #[serde(default = "default_centers")]
    pub centers: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<TestFunction>,
    /// Field file, relative to the output directory unless absolute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_file: Option<String>,
    /// Normalized ratios must not increase from one scale to the next.
    #[serde(default = "yes")]
    pub require_decreasing: bool,
    #[serde(default)]
    pub require_within_delta: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_range: Option<[f64; 2]>,
}

impl Default for AuditSection {
    fn default() -> Self {
        AuditSection {
            rho0: None,
            k_max: None,
            delta: None,
            psi_rel_tol: None,
            centers: default_centers(),
            function: None,
            field_file: None,
            require_decreasing: true,
            require_within_delta: false,
            alpha_range: None,
        }
    }
}

impl AuditSection {
    pub fn core_config(&self) -> AuditConfig {
        let d = AuditConfig::default();
        AuditConfig {
            rho0: self.rho0.unwrap_or(d.rho0),
            k_max: self.k_max.unwrap_or(d.k_max),
            delta: self.delta.unwrap_or(d.delta),
            psi_rel_tol: self.psi_rel_tol.unwrap_or(d.psi_rel_tol),
        }
    }

    /// Replaces unset parameters by their defaults so reports show the
    /// values actually used.
    fn resolve(&mut self) {
        let c = self.core_config();
        self.rho0 = Some(c.rho0);
        self.k_max = Some(c.k_max);
        self.delta = Some(c.delta);
        self.psi_rel_tol = Some(c.psi_rel_tol);
    }
}

fn default_bisections() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatnessSection {
    /// Profile with unit sup norm; the family is `δ·shape`.
    pub shape: TestFunction,
    pub deltas: Vec<f64>,
    #[serde(default = "default_bisections")]
    pub bisection_steps: usize,
    #[serde(default)]
    pub drift: Drift,
    /// Second operator run through the same table; it must pass everywhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<OperatorSpec>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.audit.resolve();
        // Flattened sections (modulus, operator) skip unknown keys during
        // deserialization, so compare against the resolved config instead.
        let input: toml::Value =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let resolved = toml::Value::try_from(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&input, &resolved, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(CliError::Config(format!(
                "unknown keys: {}",
                unknown.join(", ")
            )));
        }
        Ok(cfg)
    }

    /// Applies `--seed` and copies the effective seed into the sample plan.
    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if seed.is_some() {
            self.seed = seed;
        }
        if let Some(s) = self.seed {
            self.sampling.seed = s;
        }
    }

    pub fn require_modulus(&self) -> Result<&Modulus, CliError> {
        self.modulus.as_ref().ok_or_else(|| missing("modulus"))
    }

    pub fn require_operator(&self) -> Result<&OperatorSpec, CliError> {
        self.operator.as_ref().ok_or_else(|| missing("operator"))
    }

    pub fn require_grid(&self) -> Result<GridParams, CliError> {
        self.grid.ok_or_else(|| missing("grid"))
    }
}

fn unknown_keys(input: &toml::Value, resolved: &toml::Value, path: &str, out: &mut Vec<String>) {
    match (input, resolved) {
        (toml::Value::Table(a), toml::Value::Table(b)) => {
            for (k, v) in a {
                let p = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                match b.get(k) {
                    Some(w) => unknown_keys(v, w, &p, out),
                    None => out.push(p),
                }
            }
        }
        (toml::Value::Array(a), toml::Value::Array(b)) => {
            for (k, (v, w)) in a.iter().zip(b).enumerate() {
                unknown_keys(v, w, &format!("{path}[{k}]"), out);
            }
        }
        _ => {}
    }
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("missing [{section}] section"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_parses_with_defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c.audit.rho0, Some(0.5));
        assert_eq!(c.audit.centers, vec![[0.0, 0.0]]);
        assert!(c.modulus.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            ExperimentConfig::parse("sed = 3"),
            Err(CliError::Config(_))
        ));
        assert!(ExperimentConfig::parse("[audit]\nrho = 0.5").is_err());
        let e = ExperimentConfig::parse("[modulus]\nfamily = \"power\"\nalpha = 0.5\nbeta = 1\n")
            .unwrap_err();
        assert!(e.to_string().contains("modulus.beta"), "{e}");
    }

    #[test]
    fn invalid_modulus_is_a_config_error() {
        let e = ExperimentConfig::parse("[modulus]\nfamily = \"power\"\nalpha = 2\n").unwrap_err();
        assert!(e.to_string().contains("alpha"), "{e}");
    }

    #[test]
    fn seed_flag_overrides_file() {
        let mut c = ExperimentConfig::parse("seed = 3").unwrap();
        c.apply_seed(Some(9));
        assert_eq!((c.seed, c.sampling.seed), (Some(9), 9));
        let mut d = ExperimentConfig::parse("seed = 3").unwrap();
        d.apply_seed(None);
        assert_eq!(d.sampling.seed, 3);
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = r#"
seed = 11
[modulus]
family = "power_log"
alpha = 0.3
beta = 1
[operator]
kind = "perturbed_trace"
epsilon = 0.1
[grid]
nodes = 33
[mms]
u_star = { type = "polynomial", terms = [{ coeff = 1.0, p1 = 2, p2 = 0 }] }
"#;
        let c = ExperimentConfig::parse(text).unwrap();
        let back = ExperimentConfig::parse(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }
}
