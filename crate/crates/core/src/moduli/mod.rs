//! Moduli of continuity.
//!
//! A [`Modulus`] is an evaluable, nondecreasing function τ on `[0, domain_cap]`
//! with τ(0) = 0. Besides plain evaluation every family can be evaluated in
//! log space (`ln τ` as a function of `ln r`), which is what the Dini
//! quadrature and the asymptotic certifiers use: they routinely probe radii
//! like `2^-3000` that underflow as `f64`.

mod certify;
mod quadrature;

pub use certify::{
    check_a4, check_lcc, check_s_over_tau, holder_witness, A4Certificate, A4Plan, HolderPlan,
    HolderReport, ProfileEntry, RatioPlan, RatioReport, WitnessPoint,
};
pub use quadrature::{dini_integral, psi_transform, DiniIntegral};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModulusError {
    #[error("radius {r} outside the evaluation domain [0, {cap}]")]
    Domain { r: f64, cap: f64 },
    #[error("invalid modulus parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite modulus value at r = {0}")]
    Evaluation(f64),
    #[error("modulus is not Dini on (0, {upper}]: integral did not converge")]
    NotDini { upper: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// The built-in families plus a user-supplied table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModulusFamily {
    /// τ(r) = r^α
    Power { alpha: f64 },
    /// τ(r) = r^α / |ln r|^β
    PowerLog { alpha: f64, beta: f64 },
    /// τ(r) = r^κ · ln^ζ(1/r)
    PowerLnZ { kappa: f64, zeta: f64 },
    /// τ(r) = |ln r|^-γ
    InverseLog { gamma: f64 },
    /// Piecewise linear through `(r, τ(r))` pairs, extended by τ(0) = 0.
    Table { points: Vec<[f64; 2]> },
}

impl ModulusFamily {
    fn has_log(&self) -> bool {
        matches!(
            self,
            ModulusFamily::PowerLog { .. }
                | ModulusFamily::PowerLnZ { .. }
                | ModulusFamily::InverseLog { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModulusFamily::Power { .. } => "power",
            ModulusFamily::PowerLog { .. } => "power_log",
            ModulusFamily::PowerLnZ { .. } => "power_ln_z",
            ModulusFamily::InverseLog { .. } => "inverse_log",
            ModulusFamily::Table { .. } => "table",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ModulusRepr {
    #[serde(flatten)]
    family: ModulusFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain_cap: Option<f64>,
}

/// A validated modulus of continuity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModulusRepr", into = "ModulusRepr")]
pub struct Modulus {
    family: ModulusFamily,
    domain_cap: f64,
}

impl TryFrom<ModulusRepr> for Modulus {
    type Error = ModulusError;

    fn try_from(repr: ModulusRepr) -> Result<Self, Self::Error> {
        match repr.domain_cap {
            Some(cap) => Modulus::with_cap(repr.family, cap),
            None => Modulus::new(repr.family),
        }
    }
}

impl From<Modulus> for ModulusRepr {
    fn from(m: Modulus) -> Self {
        ModulusRepr {
            family: m.family,
            domain_cap: Some(m.domain_cap),
        }
    }
}

impl Modulus {
    /// Builds a modulus with the default domain cap: 1/2 for log-bearing
    /// families, the last table abscissa (at most 1) for tables, 1 otherwise.
    pub fn new(family: ModulusFamily) -> Result<Self, ModulusError> {
        let cap = match &family {
            f if f.has_log() => 0.5,
            ModulusFamily::Table { points } => points.last().map(|p| p[0].min(1.0)).unwrap_or(1.0),
            _ => 1.0,
        };
        Self::with_cap(family, cap)
    }

    pub fn with_cap(family: ModulusFamily, domain_cap: f64) -> Result<Self, ModulusError> {
        let bad = |msg: String| Err(ModulusError::InvalidParams(msg));
        if !(domain_cap > 0.0 && domain_cap <= 1.0) {
            return bad(format!("domain_cap must lie in (0, 1], got {domain_cap}"));
        }
        if family.has_log() && domain_cap > 0.5 {
            return bad(format!(
                "log-bearing families are restricted to r <= 1/2, got domain_cap {domain_cap}"
            ));
        }
        match &family {
            ModulusFamily::Power { alpha } => {
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return bad(format!("power requires alpha in (0, 1], got {alpha}"));
                }
            }
            ModulusFamily::PowerLog { alpha, beta } => {
                if !(*alpha > 0.0 && *alpha <= 1.0) || !(*beta >= 0.0) || !beta.is_finite() {
                    return bad(format!(
                        "power_log requires alpha in (0, 1] and beta >= 0, got ({alpha}, {beta})"
                    ));
                }
            }
            ModulusFamily::PowerLnZ { kappa, zeta } => {
                if !(*kappa > 0.0 && *kappa <= 1.0) || !zeta.is_finite() {
                    return bad(format!(
                        "power_ln_z requires kappa in (0, 1] and finite zeta, got ({kappa}, {zeta})"
                    ));
                }
            }
            ModulusFamily::InverseLog { gamma } => {
                if !(*gamma > 0.0) || !gamma.is_finite() {
                    return bad(format!("inverse_log requires gamma > 0, got {gamma}"));
                }
            }
            ModulusFamily::Table { points } => {
                if points.is_empty() {
                    return bad("table modulus needs at least one point".into());
                }
                let mut prev = [0.0, 0.0];
                for p in points {
                    if !(p[0] > prev[0]) || !p[1].is_finite() || p[1] < prev[1] {
                        return bad(format!(
                            "table points must have strictly increasing r > 0 and nondecreasing finite values, offending point {p:?}"
                        ));
                    }
                    prev = *p;
                }
                if domain_cap > points[points.len() - 1][0] {
                    return bad(format!(
                        "domain_cap {domain_cap} exceeds the last table abscissa"
                    ));
                }
            }
        }
        Ok(Modulus { family, domain_cap })
    }

    pub fn power(alpha: f64) -> Result<Self, ModulusError> {
        Self::new(ModulusFamily::Power { alpha })
    }

    pub fn power_log(alpha: f64, beta: f64) -> Result<Self, ModulusError> {
        Self::new(ModulusFamily::PowerLog { alpha, beta })
    }

    pub fn power_ln_z(kappa: f64, zeta: f64) -> Result<Self, ModulusError> {
        Self::new(ModulusFamily::PowerLnZ { kappa, zeta })
    }

    pub fn inverse_log(gamma: f64) -> Result<Self, ModulusError> {
        Self::new(ModulusFamily::InverseLog { gamma })
    }

    pub fn table(points: Vec<[f64; 2]>) -> Result<Self, ModulusError> {
        Self::new(ModulusFamily::Table { points })
    }

    pub fn family(&self) -> &ModulusFamily {
        &self.family
    }

    pub fn domain_cap(&self) -> f64 {
        self.domain_cap
    }

    /// τ(r) for `0 <= r <= domain_cap`.
    pub fn eval(&self, r: f64) -> Result<f64, ModulusError> {
        if !(r >= 0.0 && r <= self.domain_cap) {
            return Err(ModulusError::Domain {
                r,
                cap: self.domain_cap,
            });
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        let v = match &self.family {
            ModulusFamily::Power { alpha } => r.powf(*alpha),
            ModulusFamily::PowerLog { alpha, beta } => r.powf(*alpha) / (-r.ln()).powf(*beta),
            ModulusFamily::PowerLnZ { kappa, zeta } => r.powf(*kappa) * (-r.ln()).powf(*zeta),
            ModulusFamily::InverseLog { gamma } => (-r.ln()).powf(-*gamma),
            ModulusFamily::Table { points } => table_eval(points, r),
        };
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(ModulusError::Evaluation(r))
        }
    }

    /// `ln τ(r)` given `ln r`; `ln_r` may be far below the `f64` underflow
    /// threshold. Requires `ln_r <= ln(domain_cap)`; the caller guarantees it.
    pub fn ln_eval(&self, ln_r: f64) -> f64 {
        match &self.family {
            ModulusFamily::Power { alpha } => alpha * ln_r,
            ModulusFamily::PowerLog { alpha, beta } => alpha * ln_r - beta * (-ln_r).ln(),
            ModulusFamily::PowerLnZ { kappa, zeta } => kappa * ln_r + zeta * (-ln_r).ln(),
            ModulusFamily::InverseLog { gamma } => -gamma * (-ln_r).ln(),
            ModulusFamily::Table { points } => {
                let [r1, t1] = points[0];
                let r = ln_r.exp();
                if r >= r1 {
                    table_eval(points, r).ln()
                } else {
                    (t1 / r1).ln() + ln_r
                }
            }
        }
    }

    /// τ(e^{ln_r}) evaluated through log space; underflows gracefully to 0.
    pub fn eval_ln(&self, ln_r: f64) -> f64 {
        self.ln_eval(ln_r).exp()
    }

    /// Whether the Dini integral converges at the given tolerance.
    pub fn is_dini(&self, rel_tol: f64) -> bool {
        dini_integral(self, rel_tol).is_ok_and(|d| d.converged)
    }

    /// Largest violation of monotonicity, `max(τ(r_i) - τ(r_{i+1}), 0)`, over
    /// an increasing grid of `samples` points on `(0, domain_cap]`.
    pub fn monotonicity_defect(&self, samples: usize) -> f64 {
        let grid = self.uniform_grid(samples);
        grid.windows(2)
            .map(|w| (self.eval(w[0]).unwrap_or(0.0) - self.eval(w[1]).unwrap_or(0.0)).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Largest violation of subadditivity, `max(τ(r+s) - τ(r) - τ(s), 0)`,
    /// over sampled pairs with `r + s <= domain_cap`.
    pub fn subadditivity_defect(&self, samples: usize) -> f64 {
        let grid = self.uniform_grid(samples);
        let mut worst = 0.0f64;
        for &r in &grid {
            for &s in &grid {
                if r + s > self.domain_cap {
                    break;
                }
                let lhs = self.eval(r + s).unwrap_or(f64::NAN);
                let rhs = self.eval(r).unwrap_or(0.0) + self.eval(s).unwrap_or(0.0);
                worst = worst.max(lhs - rhs);
            }
        }
        worst
    }

    fn uniform_grid(&self, samples: usize) -> Vec<f64> {
        let n = samples.max(2);
        (1..=n)
            .map(|i| self.domain_cap * i as f64 / n as f64)
            .collect()
    }
}

fn table_eval(points: &[[f64; 2]], r: f64) -> f64 {
    let mut prev = [0.0, 0.0];
    for p in points {
        if r <= p[0] {
            let t = (r - prev[0]) / (p[0] - prev[0]);
            return prev[1] + t * (p[1] - prev[1]);
        }
        prev = *p;
    }
    prev[1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_half_at_quarter() {
        let m = Modulus::power(0.5).unwrap();
        assert_eq!(m.eval(0.25).unwrap(), 0.5);
    }

    #[test]
    fn zero_at_origin_for_every_family() {
        let all = [
            Modulus::power(0.3).unwrap(),
            Modulus::power_log(0.3, 1.0).unwrap(),
            Modulus::power_ln_z(0.3, 1.0).unwrap(),
            Modulus::inverse_log(2.0).unwrap(),
            Modulus::table(vec![[0.1, 0.2], [1.0, 0.5]]).unwrap(),
        ];
        for m in &all {
            assert_eq!(m.eval(0.0).unwrap(), 0.0, "{:?}", m.family());
        }
    }

    #[test]
    fn inverse_log_gamma_two() {
        let m = Modulus::inverse_log(2.0).unwrap();
        let v = m.eval((-10.0f64).exp()).unwrap();
        assert!((v - 0.01).abs() < 1e-15);
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let m = Modulus::inverse_log(2.0).unwrap();
        assert!(matches!(m.eval(0.75), Err(ModulusError::Domain { .. })));
        assert!(matches!(m.eval(-1e-3), Err(ModulusError::Domain { .. })));
        let p = Modulus::power(1.0).unwrap();
        assert!(p.eval(1.0).is_ok());
        assert!(p.eval(1.0 + 1e-12).is_err());
    }

    #[test]
    fn log_families_reject_wide_caps() {
        assert!(Modulus::with_cap(ModulusFamily::InverseLog { gamma: 2.0 }, 0.9).is_err());
        assert!(Modulus::with_cap(
            ModulusFamily::PowerLog {
                alpha: 0.3,
                beta: -1.0
            },
            0.5
        )
        .is_err());
        assert!(Modulus::power(0.0).is_err());
    }

    #[test]
    fn ln_eval_agrees_with_eval() {
        let all = [
            Modulus::power(0.3).unwrap(),
            Modulus::power_log(0.3, 1.0).unwrap(),
            Modulus::power_ln_z(0.3, -1.5).unwrap(),
            Modulus::inverse_log(2.0).unwrap(),
            Modulus::table(vec![[0.1, 0.2], [0.5, 0.3], [1.0, 0.5]]).unwrap(),
        ];
        for m in &all {
            for &r in &[1e-9, 1e-3, 0.05, 0.2, 0.5] {
                let a = m.eval(r).unwrap();
                let b = m.eval_ln(r.ln());
                assert!(
                    (a - b).abs() <= 1e-13 * a.max(1e-300),
                    "{:?} r={r}",
                    m.family()
                );
            }
        }
    }

    #[test]
    fn table_interpolates_linearly_from_zero() {
        let m = Modulus::table(vec![[0.2, 0.4], [1.0, 0.8]]).unwrap();
        assert!((m.eval(0.1).unwrap() - 0.2).abs() < 1e-15);
        assert!((m.eval(0.6).unwrap() - 0.6).abs() < 1e-15);
        assert!(Modulus::table(vec![[0.2, 0.4], [0.1, 0.8]]).is_err());
    }

    #[test]
    fn concave_families_are_monotone_and_subadditive() {
        let all = [Modulus::power(0.25).unwrap(), Modulus::power(1.0).unwrap()];
        for m in &all {
            assert_eq!(m.monotonicity_defect(400), 0.0, "{:?}", m.family());
            assert!(m.subadditivity_defect(120) <= 1e-12, "{:?}", m.family());
        }
    }

    #[test]
    fn log_families_are_monotone_but_convex_near_their_cap() {
        // power_log(0.3, 1): τ(1/2) ≈ 1.17 exceeds 2τ(1/4) ≈ 0.95.
        // inverse_log(2): τ(1/2) ≈ 2.08 exceeds 2τ(1/4) ≈ 1.04.
        for m in [
            Modulus::power_log(0.3, 1.0).unwrap(),
            Modulus::inverse_log(2.0).unwrap(),
        ] {
            assert_eq!(m.monotonicity_defect(400), 0.0);
            assert!(m.subadditivity_defect(120) > 0.1);
        }
    }
}
