use serde::Serialize;

use schauder_core::moduli::{
    check_a4, check_lcc, check_s_over_tau, dini_integral, holder_witness, psi_transform,
    A4Certificate, DiniIntegral, HolderReport, RatioReport,
};

use super::modulus_err;
use crate::config::{ExperimentConfig, ModuliCheck};
use crate::output::{Artifacts, CheckResult, CommandOutput};
use crate::CliError;

#[derive(Serialize)]
struct ModuliResult {
    family: String,
    domain_cap: f64,
    alpha0: f64,
    dini: DiniIntegral,
    #[serde(skip_serializing_if = "Option::is_none")]
    a4: Option<A4Certificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lcc: Option<RatioReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_over_tau: Option<RatioReport>,
    holder: Vec<HolderReport>,
    psi: Vec<PsiRow>,
}

#[derive(Serialize)]
struct PsiRow {
    t: f64,
    tau: f64,
    psi: f64,
}

#[derive(Serialize)]
struct ProfileRow<'a> {
    profile: &'a str,
    log2_s: f64,
    value: f64,
}

#[derive(Serialize)]
struct HolderRow {
    gamma: f64,
    verdict: String,
    max_ln_ratio: f64,
}

pub fn run(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<CommandOutput, CliError> {
    let m = cfg.require_modulus()?;
    let sec = cfg.moduli_check.clone().unwrap_or_default();
    let wants = |c: ModuliCheck| sec.checks.contains(&c);
    let mut checks = Vec::new();

    let dini = dini_integral(m, sec.rel_tol).map_err(modulus_err)?;
    if wants(ModuliCheck::Dini) {
        checks.push(CheckResult::new(
            "dini",
            dini.converged,
            format!("integral {:.12e} up to r = {}", dini.value, dini.upper),
        ));
    }

    let a4 = if wants(ModuliCheck::A4) {
        let c = check_a4(m, sec.alpha0, &sec.a4).map_err(modulus_err)?;
        checks.push(CheckResult::new(
            "a4",
            c.passes(),
            format!(
                "condition (i) {}, condition (ii) {}{}",
                c.verdict_i,
                c.verdict_ii,
                if c.disagreement {
                    ", numerical verdict disagrees"
                } else {
                    ""
                }
            ),
        ));
        Some(c)
    } else {
        None
    };

    let lcc = if wants(ModuliCheck::Lcc) {
        let r = check_lcc(m, &sec.ratio).map_err(modulus_err)?;
        checks.push(ratio_check("lcc", &r));
        Some(r)
    } else {
        None
    };
    let s_over_tau = if wants(ModuliCheck::SOverTau) {
        let r = check_s_over_tau(m, &sec.ratio).map_err(modulus_err)?;
        checks.push(ratio_check("s_over_tau", &r));
        Some(r)
    } else {
        None
    };

    let holder = sec
        .holder_gammas
        .iter()
        .map(|&g| holder_witness(m, g, &sec.holder))
        .collect::<Result<Vec<_>, _>>()
        .map_err(modulus_err)?;

    let psi = sec
        .psi_points
        .iter()
        .map(|&t| {
            Ok(PsiRow {
                t,
                tau: m.eval(t)?,
                psi: psi_transform(m, t, sec.rel_tol)?,
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(modulus_err)?;

    if let Some(c) = &a4 {
        let rows: Vec<ProfileRow> = c
            .cond_i_profile
            .iter()
            .map(|e| ProfileRow {
                profile: "i",
                log2_s: e.log2_s,
                value: e.value,
            })
            .chain(c.cond_ii_profile.iter().map(|e| ProfileRow {
                profile: "ii",
                log2_s: e.log2_s,
                value: e.value,
            }))
            .collect();
        art.write_csv("a4_profile.csv", &rows)?;
    }
    let ratio_rows: Vec<ProfileRow> = lcc
        .iter()
        .map(|r| ("lcc", r))
        .chain(s_over_tau.iter().map(|r| ("s_over_tau", r)))
        .flat_map(|(name, r)| {
            r.profile.iter().map(move |e| ProfileRow {
                profile: name,
                log2_s: e.log2_s,
                value: e.value,
            })
        })
        .collect();
    if !ratio_rows.is_empty() {
        art.write_csv("ratio_profile.csv", &ratio_rows)?;
    }
    if !holder.is_empty() {
        let rows: Vec<HolderRow> = holder
            .iter()
            .map(|h| HolderRow {
                gamma: h.gamma,
                verdict: h.is_gamma_holder_near_0.to_string(),
                max_ln_ratio: h.max_ln_ratio,
            })
            .collect();
        art.write_csv("holder.csv", &rows)?;
    }
    if !psi.is_empty() {
        art.write_csv("psi.csv", &psi)?;
    }

    let result = ModuliResult {
        family: m.family().name().into(),
        domain_cap: m.domain_cap(),
        alpha0: sec.alpha0,
        dini,
        a4,
        lcc,
        s_over_tau,
        holder,
        psi,
    };
    CommandOutput::new(checks, &result)
}

fn ratio_check(name: &str, r: &RatioReport) -> CheckResult {
    let last = r.profile.last().map_or(f64::NAN, |e| e.value);
    CheckResult::new(
        name,
        r.verdict.is_pass(),
        format!("ratio {last:.6e} at the smallest radius"),
    )
}
