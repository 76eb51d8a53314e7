use serde::{Deserialize, Serialize};

use super::{
    constrained_quadratic_fit, sup_residual, CampanatoError, QuadraticJet, MIN_BALL_NODES,
};
use crate::fields::{GridField, GridParams};
use crate::moduli::{psi_transform, Modulus};
use crate::operators::EllipticOperator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    pub rho0: f64,
    /// Largest scale index `K`; radii run over `ρ₀ᵏ`, `k = 0..=K`.
    pub k_max: usize,
    pub delta: f64,
    /// Relative tolerance for ψ in the seminorm.
    pub psi_rel_tol: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            rho0: 0.5,
            k_max: 4,
            delta: 1.0,
            psi_rel_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub k: usize,
    pub radius: f64,
    pub jet: QuadraticJet,
    /// `|F(M_k, x0)|` after the identity shift.
    pub constraint_residual: f64,
    pub sup_residual: f64,
    /// `sup_residual / (ρ₀^{2k} τ(ρ₀ᵏ))`; absent where τ is not defined.
    pub normalized_ratio: Option<f64>,
    /// `‖M_k − M_{k−1}‖_F`, absent at `k = 0`.
    pub hessian_increment: Option<f64>,
    /// `hessian_increment / τ(ρ₀^{k−1})`.
    pub increment_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayAudit {
    pub rho0: f64,
    pub delta: f64,
    pub modulus: Modulus,
    pub center: (usize, usize),
    pub records: Vec<AuditRecord>,
    /// Requested `K`.
    pub k_max: usize,
    /// The grid could not resolve every requested scale.
    pub truncated: bool,
    pub max_increment_ratio: Option<f64>,
    /// `max_r sup_{B_r}|u − P_last| / (r²ψ(r))` over the audited radii in
    /// the modulus domain.
    pub psi_seminorm: Option<f64>,
    /// `psi_seminorm / δ`.
    pub fitted_c0: Option<f64>,
    /// Every normalized ratio is at most `δ`.
    pub within_delta: bool,
}

impl DecayAudit {
    pub fn last_jet(&self) -> &QuadraticJet {
        &self
            .records
            .last()
            .expect("audits hold at least one record")
            .jet
    }

    pub fn normalized_ratios(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.normalized_ratio).collect()
    }

    pub fn max_normalized_ratio(&self) -> f64 {
        self.records
            .iter()
            .filter_map(|r| r.normalized_ratio)
            .fold(0.0, f64::max)
    }
}

fn tau_at(modulus: &Modulus, r: f64) -> Option<f64> {
    (r > 0.0 && r <= modulus.domain_cap())
        .then(|| modulus.eval(r).ok())
        .flatten()
}

/// Dyadic audit of `u` around the node `center`: an independent constrained
/// fit at each radius `ρ₀ᵏ`. Scales whose ball holds fewer than
/// [`MIN_BALL_NODES`] nodes or lies below three grid spacings end the audit
/// early with `truncated` set.
pub fn decay_audit(
    u: &GridField,
    op: &impl EllipticOperator,
    modulus: &Modulus,
    config: &AuditConfig,
    center: (usize, usize),
) -> Result<DecayAudit, CampanatoError> {
    if !(config.rho0 > 0.0 && config.rho0 <= 0.5) {
        return Err(CampanatoError::Config(format!(
            "rho0 must lie in (0, 1/2], got {}",
            config.rho0
        )));
    }
    if !(config.delta >= 0.0 && config.delta.is_finite()) {
        return Err(CampanatoError::Config(format!(
            "delta must be nonnegative, got {}",
            config.delta
        )));
    }
    let grid = u.grid();
    let x0 = grid.point(center.0, center.1);
    let mut records: Vec<AuditRecord> = Vec::with_capacity(config.k_max + 1);
    let mut truncated = false;
    for k in 0..=config.k_max {
        let radius = config.rho0.powi(k as i32);
        if radius < 3.0 * grid.spacing() * (1.0 - 1e-12)
            || grid.ball_nodes(center, radius).len() < MIN_BALL_NODES
        {
            truncated = true;
            break;
        }
        let fit = constrained_quadratic_fit(u, op, radius, center)?;
        let jet = fit.jet;
        let sup = sup_residual(u, &jet, center, radius);
        let normalized_ratio = tau_at(modulus, radius)
            .filter(|t| *t > 0.0)
            .map(|t| sup / (radius * radius * t));
        let (hessian_increment, increment_ratio) = match records.last() {
            Some(prev) => {
                let inc = (jet.m - prev.jet.m).frobenius();
                let ratio = tau_at(modulus, prev.radius)
                    .filter(|t| *t > 0.0)
                    .map(|t| inc / t);
                (Some(inc), ratio)
            }
            None => (None, None),
        };
        records.push(AuditRecord {
            k,
            radius,
            constraint_residual: op.eval(&jet.m, &x0).abs(),
            jet,
            sup_residual: sup,
            normalized_ratio,
            hessian_increment,
            increment_ratio,
        });
    }
    if records.is_empty() {
        return Err(CampanatoError::Config(
            "the unit scale is not resolved by the grid".into(),
        ));
    }
    let max_increment_ratio = records
        .iter()
        .filter_map(|r| r.increment_ratio)
        .reduce(f64::max);
    let within_delta = records
        .iter()
        .filter_map(|r| r.normalized_ratio)
        .all(|q| q <= config.delta);
    let mut audit = DecayAudit {
        rho0: config.rho0,
        delta: config.delta,
        modulus: modulus.clone(),
        center,
        records,
        k_max: config.k_max,
        truncated,
        max_increment_ratio,
        psi_seminorm: None,
        fitted_c0: None,
        within_delta,
    };
    if modulus.is_dini(config.psi_rel_tol) {
        let s = seminorm_over_radii(u, &audit, config.psi_rel_tol)?;
        audit.psi_seminorm = s;
        audit.fitted_c0 = s.filter(|_| config.delta > 0.0).map(|v| v / config.delta);
    }
    Ok(audit)
}

fn seminorm_over_radii(
    u: &GridField,
    audit: &DecayAudit,
    rel_tol: f64,
) -> Result<Option<f64>, CampanatoError> {
    let jet = audit.last_jet();
    let mut best: Option<f64> = None;
    for rec in &audit.records {
        if rec.radius > audit.modulus.domain_cap() {
            continue;
        }
        let psi = psi_transform(&audit.modulus, rec.radius, rel_tol)?;
        let v = sup_residual(u, jet, audit.center, rec.radius) / (rec.radius * rec.radius * psi);
        best = Some(best.map_or(v, |b: f64| b.max(v)));
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub value: f64,
    /// Increment ratios stay bounded over the audited scales: the largest
    /// ratio in the finer half is at most twice the largest in the coarser
    /// half.
    pub cauchy: bool,
    /// `Σ_k ‖M_k − M_{k−1}‖_F`.
    pub increment_sum: f64,
    pub radii: usize,
}

/// Empirical `C^{2,ψ}` seminorm at the audit centre using the finest jet.
pub fn c2psi_seminorm(
    u: &GridField,
    audit: &DecayAudit,
    modulus: &Modulus,
) -> Result<SeminormReport, CampanatoError> {
    if audit.records.len() < 4 {
        return Err(CampanatoError::Config(format!(
            "seminorm needs an audit with K >= 3, got {} scales",
            audit.records.len()
        )));
    }
    let rel_tol = 1e-10;
    let audit = DecayAudit {
        modulus: modulus.clone(),
        ..audit.clone()
    };
    let value = seminorm_over_radii(u, &audit, rel_tol)?.ok_or_else(|| {
        CampanatoError::Config("no audited radius lies in the modulus domain".into())
    })?;
    let incs: Vec<f64> = audit
        .records
        .iter()
        .filter_map(|r| r.hessian_increment)
        .collect();
    let ratios: Vec<f64> = audit
        .records
        .windows(2)
        .filter_map(|w| {
            let inc = w[1].hessian_increment?;
            let t = tau_at(modulus, w[0].radius).filter(|t| *t > 0.0)?;
            Some(inc / t)
        })
        .collect();
    let half = ratios.len() / 2;
    let coarse = ratios[..half].iter().copied().fold(0.0, f64::max);
    let fine = ratios[half..].iter().copied().fold(0.0, f64::max);
    let scale = incs
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let cauchy = fine <= 2.0 * coarse + 1e-12 * scale;
    Ok(SeminormReport {
        value,
        cauchy,
        increment_sum: incs.iter().sum(),
        radii: audit.records.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayExponent {
    /// Slope of `log(sup_residual/r²)` against `log r`; absent when fewer
    /// than four scales carry a nonzero residual.
    pub alpha_hat: Option<f64>,
    pub r2: Option<f64>,
    pub scales_used: usize,
}

/// Least-squares decay exponent. Residuals at or below `1e-12` times the
/// largest residual count as zero.
pub fn fit_decay_exponent(audit: &DecayAudit) -> DecayExponent {
    let peak = audit
        .records
        .iter()
        .map(|r| r.sup_residual)
        .fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = audit
        .records
        .iter()
        .filter(|r| peak > 0.0 && r.sup_residual > 1e-12 * peak.max(1.0))
        .map(|r| (r.radius.ln(), (r.sup_residual / (r.radius * r.radius)).ln()))
        .collect();
    if pts.len() < 4 {
        return DecayExponent {
            alpha_hat: None,
            r2: None,
            scales_used: pts.len(),
        };
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    DecayExponent {
        alpha_hat: Some(slope),
        r2: Some(r2),
        scales_used: pts.len(),
    }
}

/// The field `x ↦ (u − P)(x0 + ρ₀x) / (ρ₀² τ(ρ₀))` on the grid with the same
/// node count and half-width `L/ρ₀`, built node for node so that the balls
/// of the rescaled audit are exactly the balls of the original one.
pub fn rescale_field(
    u: &GridField,
    jet: Option<&QuadraticJet>,
    center: (usize, usize),
    rho0: f64,
    tau_rho0: f64,
) -> Result<GridField, CampanatoError> {
    let g = u.grid();
    if center != g.center() {
        return Err(CampanatoError::Config(
            "rescaling is only defined about the grid centre".into(),
        ));
    }
    let grid = GridParams::new(g.nodes(), g.half_width() / rho0)?;
    let h = g.spacing();
    let scale = 1.0 / (rho0 * rho0 * tau_rho0);
    let mut out = GridField::zeros(grid, 1);
    for j in 0..g.nodes() {
        for i in 0..g.nodes() {
            let y = [
                (i as f64 - center.0 as f64) * h,
                (j as f64 - center.1 as f64) * h,
            ];
            let p = jet.map_or(0.0, |jet| jet.eval(y));
            out.set(i, j, (u.get(i, j) - p) * scale);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{sample_function, TestFunction};
    use crate::operators::{OperatorSpec, SymMatrix};

    fn grid(n: usize) -> GridParams {
        GridParams::new(n, 1.0).unwrap()
    }

    #[test]
    fn admissible_quadratic_has_zero_residuals() {
        let g = grid(129);
        let u =
            sample_function(&TestFunction::quadratic(SymMatrix::diag(&[1.5, -1.5])), g).unwrap();
        let m = Modulus::power(0.5).unwrap();
        let a = decay_audit(
            &u,
            &OperatorSpec::laplacian(2),
            &m,
            &AuditConfig::default(),
            g.center(),
        )
        .unwrap();
        assert_eq!(a.records.len(), 5);
        assert!(a.records.iter().all(|r| r.sup_residual < 1e-12));
        assert!(a.psi_seminorm.unwrap() < 1e-11);
        assert!(fit_decay_exponent(&a).alpha_hat.is_none());
    }

    #[test]
    fn harmonic_cubic_decays_like_r_cubed() {
        let g = grid(65);
        let u = sample_function(&TestFunction::harmonic_cubic(), g).unwrap();
        let m = Modulus::power(0.5).unwrap();
        let a = decay_audit(
            &u,
            &OperatorSpec::laplacian(2),
            &m,
            &AuditConfig::default(),
            g.center(),
        )
        .unwrap();
        let q: Vec<f64> = a
            .normalized_ratios()
            .into_iter()
            .map(Option::unwrap)
            .collect();
        assert!(q.windows(2).all(|w| w[1] < w[0]), "{q:?}");
        let e = fit_decay_exponent(&a);
        assert!((e.alpha_hat.unwrap() - 1.0).abs() < 0.1, "{e:?}");
    }

    #[test]
    fn audit_truncates_on_coarse_grids() {
        let g = grid(17);
        let u = sample_function(&TestFunction::harmonic_cubic(), g).unwrap();
        let cfg = AuditConfig {
            k_max: 6,
            ..AuditConfig::default()
        };
        let a = decay_audit(
            &u,
            &OperatorSpec::laplacian(2),
            &Modulus::power(1.0).unwrap(),
            &cfg,
            g.center(),
        )
        .unwrap();
        assert!(a.truncated);
        assert!(a.records.len() < 7);
        let radii: Vec<f64> = a.records.iter().map(|r| r.radius).collect();
        assert!(radii.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rescaled_field_lives_on_wider_grid() {
        let g = grid(33);
        let u = sample_function(&TestFunction::harmonic_cubic(), g).unwrap();
        let v = rescale_field(&u, None, g.center(), 0.5, 0.5).unwrap();
        assert_eq!(v.grid().half_width(), 2.0);
        assert!((v.get(32, 16) - u.get(32, 16) * 8.0).abs() < 1e-15);
    }
}
