//! Finite certification of asymptotic conditions on moduli.
//!
//! Every check works on geometric grids `2^-j` evaluated in log space and
//! returns the raw profile next to the verdict, so a report can always be
//! re-judged with different thresholds.

use serde::{Deserialize, Serialize};

use super::{Modulus, ModulusError, ModulusFamily};
use crate::Verdict;

const LN2: f64 = std::f64::consts::LN_2;

/// Sample plan for the two nullity conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct A4Plan {
    /// s = 2^-j for j = 1..=s_max_exponent.
    pub s_max_exponent: u32,
    /// r = 2^-i for i = 1..=r_max_exponent.
    pub r_max_exponent: u32,
    /// k = 0..=k_max (terms with s^k above the domain cap are skipped).
    pub k_max: u32,
    /// Pass threshold for the profile value at the smallest s.
    pub threshold: f64,
    /// A profile whose minimum stays at or above this floor is a numerical fail.
    pub fail_floor: f64,
}

impl Default for A4Plan {
    fn default() -> Self {
        A4Plan {
            s_max_exponent: 60,
            r_max_exponent: 60,
            k_max: 50,
            threshold: 1e-3,
            fail_floor: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    /// s = 2^log2_s
    pub log2_s: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A4Certificate {
    pub alpha0: f64,
    /// (s, sup_r τ(rs)/τ(r))
    pub cond_i_profile: Vec<ProfileEntry>,
    /// (s, sup_k s^α₀ τ(s^k)/τ(s^{k+1}))
    pub cond_ii_profile: Vec<ProfileEntry>,
    pub numeric_verdict_i: Verdict,
    pub numeric_verdict_ii: Verdict,
    /// Known asymptotic verdicts for built-in families.
    pub analytic_i: Option<Verdict>,
    pub analytic_ii: Option<Verdict>,
    /// Analytic verdict when available, numerical otherwise.
    pub verdict_i: Verdict,
    pub verdict_ii: Verdict,
    /// True when a conclusive numerical verdict contradicts the analytic one.
    pub disagreement: bool,
    pub plan: A4Plan,
}

impl A4Certificate {
    pub fn passes(&self) -> bool {
        self.verdict_i.is_pass() && self.verdict_ii.is_pass()
    }
}

pub fn check_a4(m: &Modulus, alpha0: f64, plan: &A4Plan) -> Result<A4Certificate, ModulusError> {
    if !(alpha0 > 0.0 && alpha0 <= 1.0) {
        return Err(ModulusError::Config(format!(
            "alpha0 must lie in (0, 1], got {alpha0}"
        )));
    }
    if plan.s_max_exponent == 0 || plan.r_max_exponent == 0 {
        return Err(ModulusError::Config("empty sample plan".into()));
    }
    if !(plan.threshold > 0.0) || !(plan.fail_floor > plan.threshold) {
        return Err(ModulusError::Config(
            "need 0 < threshold < fail_floor in the sample plan".into(),
        ));
    }
    let ln_cap = m.domain_cap().ln();
    let r_grid: Vec<f64> = (1..=plan.r_max_exponent)
        .map(|i| -(i as f64) * LN2)
        .filter(|&lr| lr <= ln_cap)
        .collect();
    if r_grid.is_empty() {
        return Err(ModulusError::Config(
            "r-grid has no point inside the domain".into(),
        ));
    }

    let mut cond_i = Vec::with_capacity(plan.s_max_exponent as usize);
    let mut cond_ii = Vec::with_capacity(plan.s_max_exponent as usize);
    for j in 1..=plan.s_max_exponent {
        let ln_s = -(j as f64) * LN2;
        let sup_i = r_grid
            .iter()
            .map(|&lr| (m.ln_eval(lr + ln_s) - m.ln_eval(lr)).exp())
            .fold(0.0, f64::max);
        cond_i.push(ProfileEntry {
            log2_s: -(j as f64),
            value: sup_i,
        });

        let sup_ii = (0..=plan.k_max)
            .filter(|&k| k as f64 * ln_s <= ln_cap)
            .map(|k| {
                let lk = k as f64 * ln_s;
                (alpha0 * ln_s + m.ln_eval(lk) - m.ln_eval(lk + ln_s)).exp()
            })
            .fold(0.0, f64::max);
        cond_ii.push(ProfileEntry {
            log2_s: -(j as f64),
            value: sup_ii,
        });
    }

    let numeric_i = judge_profile(&cond_i, plan);
    let numeric_ii = judge_profile(&cond_ii, plan);
    let (analytic_i, analytic_ii) = analytic_a4(m.family(), alpha0);
    let disagrees = |num: Verdict, ana: Option<Verdict>| match ana {
        Some(a) => num != Verdict::Inconclusive && num != a,
        None => false,
    };
    Ok(A4Certificate {
        alpha0,
        numeric_verdict_i: numeric_i,
        numeric_verdict_ii: numeric_ii,
        analytic_i,
        analytic_ii,
        verdict_i: analytic_i.unwrap_or(numeric_i),
        verdict_ii: analytic_ii.unwrap_or(numeric_ii),
        disagreement: disagrees(numeric_i, analytic_i) || disagrees(numeric_ii, analytic_ii),
        cond_i_profile: cond_i,
        cond_ii_profile: cond_ii,
        plan: plan.clone(),
    })
}

fn judge_profile(profile: &[ProfileEntry], plan: &A4Plan) -> Verdict {
    let last = profile.last().map(|e| e.value).unwrap_or(f64::INFINITY);
    let min = profile
        .iter()
        .map(|e| e.value)
        .fold(f64::INFINITY, f64::min);
    if last <= plan.threshold {
        Verdict::Pass
    } else if min >= plan.fail_floor {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

fn analytic_a4(family: &ModulusFamily, alpha0: f64) -> (Option<Verdict>, Option<Verdict>) {
    use ModulusFamily::*;
    match *family {
        // τ(rs)/τ(r) = s^α; s^α₀ τ(s^k)/τ(s^{k+1}) = s^{α₀-α}.
        Power { alpha } => (
            Some(Verdict::Pass),
            Some(Verdict::from_bool(alpha < alpha0)),
        ),
        // Ratio (i) is at most s^α; ratio (ii) is s^{α₀-α}((k+1)/k)^β.
        PowerLog { alpha, .. } => (
            Some(Verdict::Pass),
            Some(Verdict::from_bool(alpha < alpha0)),
        ),
        // Ratio (i) is s^κ (1 + ln(1/s)/ln(1/r))^ζ; ratio (ii) is s^{α₀-κ}(k/(k+1))^ζ.
        PowerLnZ { kappa, .. } => (
            Some(Verdict::Pass),
            Some(Verdict::from_bool(kappa < alpha0)),
        ),
        // (ln(1/r)/ln(1/(rs)))^γ → 1 as r → 0 for every fixed s, while
        // ratio (ii) is s^α₀((k+1)/k)^γ ≤ 2^γ s^α₀.
        InverseLog { .. } => (Some(Verdict::Fail), Some(Verdict::Pass)),
        Table { .. } => (None, None),
    }
}

/// Sample plan for the ratio checks `τ(t)/t → ∞` and `t/τ(t) → 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RatioPlan {
    /// t = 2^-j for j = 1..=max_exponent.
    pub max_exponent: u32,
    /// Length of the final window that must be monotone.
    pub window: usize,
    /// For LCC the last ratio must exceed `bound`; for s/τ it must fall
    /// below `1/bound`.
    pub bound: f64,
}

impl Default for RatioPlan {
    fn default() -> Self {
        RatioPlan {
            max_exponent: 60,
            window: 10,
            bound: 1e3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub verdict: Verdict,
    /// (log2 t, ratio) along the decreasing grid.
    pub profile: Vec<ProfileEntry>,
    pub plan: RatioPlan,
}

/// Limiting compatibility: τ(t)/t increases without bound as t → 0.
pub fn check_lcc(m: &Modulus, plan: &RatioPlan) -> Result<RatioReport, ModulusError> {
    let profile = ratio_profile(m, plan, |ln_t, ln_tau| (ln_tau - ln_t).exp())?;
    let n = profile.len();
    let w = plan.window.min(n).max(2);
    let tail = &profile[n - w..];
    let monotone = tail.windows(2).all(|p| p[1].value >= p[0].value);
    let ok = monotone && profile[n - 1].value > plan.bound;
    Ok(RatioReport {
        verdict: Verdict::from_bool(ok),
        profile,
        plan: plan.clone(),
    })
}

/// s/τ(s) → 0 as s → 0.
pub fn check_s_over_tau(m: &Modulus, plan: &RatioPlan) -> Result<RatioReport, ModulusError> {
    let profile = ratio_profile(m, plan, |ln_t, ln_tau| (ln_t - ln_tau).exp())?;
    let n = profile.len();
    let w = plan.window.min(n).max(2);
    let tail = &profile[n - w..];
    let monotone = tail.windows(2).all(|p| p[1].value <= p[0].value);
    let ok = monotone && profile[n - 1].value < 1.0 / plan.bound;
    Ok(RatioReport {
        verdict: Verdict::from_bool(ok),
        profile,
        plan: plan.clone(),
    })
}

fn ratio_profile(
    m: &Modulus,
    plan: &RatioPlan,
    ratio: impl Fn(f64, f64) -> f64,
) -> Result<Vec<ProfileEntry>, ModulusError> {
    let ln_cap = m.domain_cap().ln();
    let profile: Vec<ProfileEntry> = (1..=plan.max_exponent)
        .map(|j| -(j as f64))
        .filter(|&l2| l2 * LN2 <= ln_cap)
        .map(|l2| {
            let ln_t = l2 * LN2;
            ProfileEntry {
                log2_s: l2,
                value: ratio(ln_t, m.ln_eval(ln_t)),
            }
        })
        .collect();
    if profile.len() < 2 {
        return Err(ModulusError::Config(
            "ratio plan needs at least two grid points inside the domain".into(),
        ));
    }
    Ok(profile)
}

/// Sample plan for the Hölder comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HolderPlan {
    /// r = 2^-j for j = 1..=max_exponent (log space, so thousands are fine).
    pub max_exponent: u32,
    /// Length of the final window that must be nondecreasing for a witness.
    pub window: usize,
    /// τ(r)/r^γ above this bound counts as unbounded.
    pub bound: f64,
}

impl Default for HolderPlan {
    fn default() -> Self {
        HolderPlan {
            max_exponent: 2048,
            window: 64,
            bound: 1e6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessPoint {
    /// r = 2^log2_r
    pub log2_r: f64,
    /// ln(τ(r)/r^γ); kept in log form since the ratio may overflow.
    pub ln_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub gamma: f64,
    /// Pass: τ(r) ≤ C r^γ on the grid. Fail: the ratio is unbounded.
    pub is_gamma_holder_near_0: Verdict,
    /// Radii where the ratio first exceeds 10, 10², … (only for a fail).
    pub witness: Option<Vec<WitnessPoint>>,
    pub max_ln_ratio: f64,
    pub plan: HolderPlan,
}

pub fn holder_witness(
    m: &Modulus,
    gamma: f64,
    plan: &HolderPlan,
) -> Result<HolderReport, ModulusError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(ModulusError::Config(format!(
            "gamma must lie in (0, 1], got {gamma}"
        )));
    }
    let ln_cap = m.domain_cap().ln();
    let pts: Vec<WitnessPoint> = (1..=plan.max_exponent)
        .map(|j| -(j as f64))
        .filter(|&l2| l2 * LN2 <= ln_cap)
        .map(|l2| {
            let ln_r = l2 * LN2;
            WitnessPoint {
                log2_r: l2,
                ln_ratio: m.ln_eval(ln_r) - gamma * ln_r,
            }
        })
        .collect();
    if pts.len() < 2 {
        return Err(ModulusError::Config(
            "holder plan needs at least two grid points inside the domain".into(),
        ));
    }
    let ln_bound = plan.bound.ln();
    let max_ln_ratio = pts
        .iter()
        .map(|p| p.ln_ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let w = plan.window.min(pts.len()).max(2);
    let tail = &pts[pts.len() - w..];
    let growing = tail.windows(2).all(|p| p[1].ln_ratio >= p[0].ln_ratio);
    let last = pts[pts.len() - 1].ln_ratio;

    let (verdict, witness) = if growing && last > ln_bound {
        let mut wit = Vec::new();
        let mut level = 1.0f64;
        for p in &pts {
            if p.ln_ratio > level * std::f64::consts::LN_10 {
                wit.push(p.clone());
                while p.ln_ratio > level * std::f64::consts::LN_10 {
                    level += 1.0;
                }
            }
        }
        wit.push(pts[pts.len() - 1].clone());
        wit.dedup();
        (Verdict::Fail, Some(wit))
    } else if max_ln_ratio <= ln_bound {
        (Verdict::Pass, None)
    } else {
        (Verdict::Inconclusive, None)
    };
    Ok(HolderReport {
        gamma,
        is_gamma_holder_near_0: verdict,
        witness,
        max_ln_ratio,
        plan: plan.clone(),
    })
}
