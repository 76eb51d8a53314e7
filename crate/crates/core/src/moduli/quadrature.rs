//! Dini integrals and the ψ-transform.
//!
//! With `r = c·e^{-t}` the singular integral `∫₀^c τ(r)/r dr` becomes
//! `∫₀^∞ τ(c·e^{-t}) dt`, whose integrand is bounded and nonincreasing.
//! The half-line is covered by doubling windows `[0,1], [1,2], [2,4], …`,
//! each integrated with a composite Gauss–Legendre rule. The tail beyond
//! the current window is extrapolated geometrically from the ratio of the
//! last two window increments; a ratio that stays at or above one means the
//! tail does not shrink and the integral is declared divergent.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{Modulus, ModulusError};

const GAUSS_POINTS: usize = 20;
const PANELS_PER_WINDOW: usize = 16;
const MAX_LEVELS: usize = 400;
const MIN_LEVELS: usize = 4;
const DIVERGENCE_STREAK: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiniIntegral {
    /// Extrapolated value when converged, partial sum otherwise.
    pub value: f64,
    pub converged: bool,
    /// Number of doubling windows integrated.
    pub levels: usize,
    /// Geometric tail estimate added to the partial sum.
    pub tail_estimate: f64,
    /// Upper limit of integration in `r`.
    pub upper: f64,
}

/// `∫₀^{domain_cap} τ(r)/r dr`.
pub fn dini_integral(m: &Modulus, rel_tol: f64) -> Result<DiniIntegral, ModulusError> {
    check_tol(rel_tol)?;
    Ok(log_tail_integral(m, m.domain_cap().ln(), rel_tol))
}

/// ψ(t) = τ(t) + ∫₀ᵗ τ(s)/s ds.
pub fn psi_transform(m: &Modulus, t: f64, rel_tol: f64) -> Result<f64, ModulusError> {
    check_tol(rel_tol)?;
    if !(t > 0.0 && t <= m.domain_cap()) {
        return Err(ModulusError::Domain {
            r: t,
            cap: m.domain_cap(),
        });
    }
    let integral = log_tail_integral(m, t.ln(), rel_tol);
    if !integral.converged {
        return Err(ModulusError::NotDini { upper: t });
    }
    Ok(m.eval(t)? + integral.value)
}

fn check_tol(rel_tol: f64) -> Result<(), ModulusError> {
    if rel_tol > 0.0 && rel_tol.is_finite() {
        Ok(())
    } else {
        Err(ModulusError::Config(format!(
            "rel_tol must be positive, got {rel_tol}"
        )))
    }
}

/// `∫₀^∞ τ(e^{ln_upper - t}) dt`.
fn log_tail_integral(m: &Modulus, ln_upper: f64, rel_tol: f64) -> DiniIntegral {
    let g = |t: f64| m.eval_ln(ln_upper - t);
    let mut partial = 0.0;
    let mut prev_inc: Option<f64> = None;
    let mut prev_extrap: Option<f64> = None;
    let mut streak = 0;

    for level in 0..MAX_LEVELS {
        let (a, b) = window(level);
        let inc = gauss_composite(&g, a, b, PANELS_PER_WINDOW);
        partial += inc;

        if let Some(prev) = prev_inc {
            if prev == 0.0 && inc == 0.0 {
                return DiniIntegral {
                    value: partial,
                    converged: true,
                    levels: level + 1,
                    tail_estimate: 0.0,
                    upper: ln_upper.exp(),
                };
            }
            let q = inc / prev;
            if q < 1.0 {
                streak = 0;
                let tail = inc * q / (1.0 - q);
                let extrap = partial + tail;
                if let Some(pe) = prev_extrap {
                    if level >= MIN_LEVELS && (extrap - pe).abs() <= rel_tol * extrap.abs() {
                        return DiniIntegral {
                            value: extrap,
                            converged: true,
                            levels: level + 1,
                            tail_estimate: tail,
                            upper: ln_upper.exp(),
                        };
                    }
                }
                prev_extrap = Some(extrap);
            } else {
                streak += 1;
                prev_extrap = None;
                if streak >= DIVERGENCE_STREAK && level >= 2 * MIN_LEVELS {
                    return divergent(partial, level + 1, ln_upper);
                }
            }
        }
        prev_inc = Some(inc);
    }
    divergent(partial, MAX_LEVELS, ln_upper)
}

fn divergent(partial: f64, levels: usize, ln_upper: f64) -> DiniIntegral {
    DiniIntegral {
        value: partial,
        converged: false,
        levels,
        tail_estimate: f64::INFINITY,
        upper: ln_upper.exp(),
    }
}

fn window(level: usize) -> (f64, f64) {
    if level == 0 {
        (0.0, 1.0)
    } else {
        let b = 2f64.powi(level as i32);
        (b / 2.0, b)
    }
}

pub(crate) fn gauss_composite(g: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (nodes, weights) = gauss_legendre();
    let w = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * w;
        let mid = lo + 0.5 * w;
        let mut s = 0.0;
        for (x, wt) in nodes.iter().zip(weights) {
            s += wt * g(mid + 0.5 * w * x);
        }
        sum += 0.5 * w * s;
    }
    sum
}

/// Nodes and weights on [-1, 1], computed once by Newton iteration on the
/// Legendre polynomial.
fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_POINTS;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    })
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let v = gauss_composite(&|x: f64| x.powi(7) - 3.0 * x * x, 0.0, 2.0, 1);
        assert!((v - (2f64.powi(8) / 8.0 - 8.0)).abs() < 1e-12);
        let (_, w) = gauss_legendre();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn power_dini_integral_is_reciprocal_alpha() {
        for &alpha in &[0.25, 0.5, 0.75, 1.0] {
            let m = Modulus::power(alpha).unwrap();
            let d = dini_integral(&m, 1e-10).unwrap();
            assert!(d.converged);
            assert!(
                (d.value - 1.0 / alpha).abs() < 1e-8,
                "alpha={alpha} got {}",
                d.value
            );
        }
    }

    #[test]
    fn inverse_log_dini() {
        let m = Modulus::inverse_log(2.0).unwrap();
        let d = dini_integral(&m, 1e-10).unwrap();
        assert!(d.converged);
        assert!((d.value - 1.0 / 2f64.ln()).abs() < 1e-6, "{}", d.value);

        let m = Modulus::inverse_log(1.0).unwrap();
        let d = dini_integral(&m, 1e-10).unwrap();
        assert!(!d.converged);
        assert!(d.value.is_finite());
    }

    #[test]
    fn psi_power_closed_form() {
        let m = Modulus::power(1.0).unwrap();
        assert!((psi_transform(&m, 0.5, 1e-10).unwrap() - 1.0).abs() < 1e-10);
        let m = Modulus::power(0.5).unwrap();
        for &t in &[0.125f64, 0.25, 0.5] {
            let want = t.sqrt() * 3.0;
            assert!((psi_transform(&m, t, 1e-10).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn psi_rejects_non_dini() {
        let m = Modulus::inverse_log(0.5).unwrap();
        assert!(matches!(
            psi_transform(&m, 0.25, 1e-8),
            Err(ModulusError::NotDini { .. })
        ));
        assert!(psi_transform(&m, 0.0, 1e-8).is_err());
    }

    #[test]
    fn table_modulus_integrates() {
        // τ = r on (0, 1]: integral 1.
        let m = Modulus::table(vec![[0.5, 0.5], [1.0, 1.0]]).unwrap();
        let d = dini_integral(&m, 1e-10).unwrap();
        assert!(d.converged);
        assert!((d.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn bad_tolerance_is_config_error() {
        let m = Modulus::power(0.5).unwrap();
        assert!(matches!(
            dini_integral(&m, 0.0),
            Err(ModulusError::Config(_))
        ));
    }
}
