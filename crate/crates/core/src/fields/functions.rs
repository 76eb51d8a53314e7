use serde::{Deserialize, Serialize};

use super::FieldError;
use crate::operators::SymMatrix;

/// One monomial `coeff · x₁^p1 · x₂^p2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub p1: u32,
    pub p2: u32,
}

impl Monomial {
    pub fn new(coeff: f64, p1: u32, p2: u32) -> Self {
        Monomial { coeff, p1, p2 }
    }
}

/// Planar test functions with analytic gradients and Hessians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TestFunction {
    Zero,
    /// c + b·x + ½ xᵀMx
    Quadratic {
        #[serde(default)]
        c: f64,
        #[serde(default = "zero2")]
        b: [f64; 2],
        m: SymMatrix,
    },
    Polynomial {
        terms: Vec<Monomial>,
    },
    /// coeff · ‖x‖^exponent
    RadialPower {
        coeff: f64,
        exponent: f64,
    },
    /// coeff · r² / ln(R/r)², whose Hessian has modulus of order |ln r|⁻².
    /// Needs `big_r` larger than e times the largest radius used.
    RadialLogSquared {
        coeff: f64,
        big_r: f64,
    },
    /// Sum of the listed functions.
    Sum {
        parts: Vec<TestFunction>,
    },
}

fn zero2() -> [f64; 2] {
    [0.0, 0.0]
}

impl TestFunction {
    pub fn quadratic(m: SymMatrix) -> Self {
        TestFunction::Quadratic {
            c: 0.0,
            b: [0.0, 0.0],
            m,
        }
    }

    pub fn polynomial(terms: &[(f64, u32, u32)]) -> Self {
        TestFunction::Polynomial {
            terms: terms
                .iter()
                .map(|&(c, a, b)| Monomial::new(c, a, b))
                .collect(),
        }
    }

    /// x₁³ − 3x₁x₂²
    pub fn harmonic_cubic() -> Self {
        Self::polynomial(&[(1.0, 3, 0), (-3.0, 1, 2)])
    }

    /// ‖x‖^{5/2}: the Hessian has modulus of continuity r^{1/2} at the origin.
    pub fn sqrt_hessian_modulus() -> Self {
        TestFunction::RadialPower {
            coeff: 1.0,
            exponent: 2.5,
        }
    }

    /// r²/ln(2e/r)²: the Hessian has modulus of order |ln r|⁻² on the unit ball.
    pub fn log_hessian_modulus() -> Self {
        TestFunction::RadialLogSquared {
            coeff: 1.0,
            big_r: 2.0 * std::f64::consts::E,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        match self {
            TestFunction::Zero => TestFunction::Zero,
            TestFunction::Quadratic { c, b, m } => TestFunction::Quadratic {
                c: factor * c,
                b: [factor * b[0], factor * b[1]],
                m: factor * m,
            },
            TestFunction::Polynomial { terms } => TestFunction::Polynomial {
                terms: terms
                    .into_iter()
                    .map(|t| Monomial::new(factor * t.coeff, t.p1, t.p2))
                    .collect(),
            },
            TestFunction::RadialPower { coeff, exponent } => TestFunction::RadialPower {
                coeff: factor * coeff,
                exponent,
            },
            TestFunction::RadialLogSquared { coeff, big_r } => TestFunction::RadialLogSquared {
                coeff: factor * coeff,
                big_r,
            },
            TestFunction::Sum { parts } => TestFunction::Sum {
                parts: parts.into_iter().map(|p| p.scaled(factor)).collect(),
            },
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        match self {
            TestFunction::RadialPower { exponent, .. } if !(*exponent > 0.0) => Err(
                FieldError::Config(format!("radial exponent must be positive, got {exponent}")),
            ),
            TestFunction::RadialLogSquared { big_r, .. } if !(*big_r > 1.0) => Err(
                FieldError::Config(format!("big_r must exceed 1, got {big_r}")),
            ),
            TestFunction::Sum { parts } => parts.iter().try_for_each(|p| p.validate()),
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        match self {
            TestFunction::Zero => 0.0,
            TestFunction::Quadratic { c, b, m } => {
                c + b[0] * x[0]
                    + b[1] * x[1]
                    + 0.5
                        * (m.get(0, 0) * x[0] * x[0]
                            + 2.0 * m.get(0, 1) * x[0] * x[1]
                            + m.get(1, 1) * x[1] * x[1])
            }
            TestFunction::Polynomial { terms } => terms
                .iter()
                .map(|t| t.coeff * x[0].powi(t.p1 as i32) * x[1].powi(t.p2 as i32))
                .sum(),
            TestFunction::RadialPower { coeff, exponent } => {
                let r = x[0].hypot(x[1]);
                if r == 0.0 {
                    0.0
                } else {
                    coeff * r.powf(*exponent)
                }
            }
            TestFunction::RadialLogSquared { coeff, big_r } => {
                let r = x[0].hypot(x[1]);
                if r == 0.0 {
                    0.0
                } else {
                    let l = (big_r / r).ln();
                    coeff * r * r / (l * l)
                }
            }
            TestFunction::Sum { parts } => parts.iter().map(|p| p.value(x)).sum(),
        }
    }

    pub fn gradient(&self, x: [f64; 2]) -> Result<[f64; 2], FieldError> {
        Ok(match self {
            TestFunction::Zero => [0.0, 0.0],
            TestFunction::Quadratic { b, m, .. } => [
                b[0] + m.get(0, 0) * x[0] + m.get(0, 1) * x[1],
                b[1] + m.get(0, 1) * x[0] + m.get(1, 1) * x[1],
            ],
            TestFunction::Polynomial { terms } => {
                let mut g = [0.0, 0.0];
                for t in terms {
                    if t.p1 > 0 {
                        g[0] += t.coeff
                            * t.p1 as f64
                            * x[0].powi(t.p1 as i32 - 1)
                            * x[1].powi(t.p2 as i32);
                    }
                    if t.p2 > 0 {
                        g[1] += t.coeff
                            * t.p2 as f64
                            * x[0].powi(t.p1 as i32)
                            * x[1].powi(t.p2 as i32 - 1);
                    }
                }
                g
            }
            TestFunction::RadialPower { .. } | TestFunction::RadialLogSquared { .. } => {
                let r = x[0].hypot(x[1]);
                if r == 0.0 {
                    if self.radial_order() <= 1.0 {
                        return Err(FieldError::Evaluation {
                            what: "gradient of a radial function at the origin".into(),
                        });
                    }
                    [0.0, 0.0]
                } else {
                    let (d1, _) = self.radial_derivatives(r);
                    [d1 * x[0] / r, d1 * x[1] / r]
                }
            }
            TestFunction::Sum { parts } => {
                let mut g = [0.0, 0.0];
                for p in parts {
                    let pg = p.gradient(x)?;
                    g[0] += pg[0];
                    g[1] += pg[1];
                }
                g
            }
        })
    }

    pub fn hessian(&self, x: [f64; 2]) -> Result<SymMatrix, FieldError> {
        Ok(match self {
            TestFunction::Zero => SymMatrix::zeros(2),
            TestFunction::Quadratic { m, .. } => *m,
            TestFunction::Polynomial { terms } => {
                let mut h = SymMatrix::zeros(2);
                let pw = |v: f64, p: i64| if p < 0 { 0.0 } else { v.powi(p as i32) };
                for t in terms {
                    let (a, b) = (t.p1 as i64, t.p2 as i64);
                    let (af, bf) = (a as f64, b as f64);
                    h.set(
                        0,
                        0,
                        h.get(0, 0) + t.coeff * af * (af - 1.0) * pw(x[0], a - 2) * pw(x[1], b),
                    );
                    h.set(
                        1,
                        1,
                        h.get(1, 1) + t.coeff * bf * (bf - 1.0) * pw(x[0], a) * pw(x[1], b - 2),
                    );
                    h.set(
                        0,
                        1,
                        h.get(0, 1) + t.coeff * af * bf * pw(x[0], a - 1) * pw(x[1], b - 1),
                    );
                }
                h
            }
            TestFunction::RadialPower { .. } | TestFunction::RadialLogSquared { .. } => {
                let r = x[0].hypot(x[1]);
                if r == 0.0 {
                    if self.radial_order() <= 2.0 {
                        return Err(FieldError::Evaluation {
                            what: "Hessian of a radial function at the origin".into(),
                        });
                    }
                    SymMatrix::zeros(2)
                } else {
                    // φ'' x̂x̂ᵀ + (φ'/r)(I − x̂x̂ᵀ)
                    let (d1, d2) = self.radial_derivatives(r);
                    let e = [x[0] / r, x[1] / r];
                    let tangential = d1 / r;
                    let mut h = SymMatrix::scaled_identity(2, tangential);
                    h += (d2 - tangential) * SymMatrix::outer(&e);
                    h
                }
            }
            TestFunction::Sum { parts } => {
                let mut h = SymMatrix::zeros(2);
                for p in parts {
                    h += p.hessian(x)?;
                }
                h
            }
        })
    }

    /// Growth order at the origin for radial profiles. The log-squared
    /// profile is only o(r²), but its Hessian tends to zero at the origin,
    /// so it is classed with the orders above two.
    fn radial_order(&self) -> f64 {
        match self {
            TestFunction::RadialPower { exponent, .. } => *exponent,
            TestFunction::RadialLogSquared { .. } => 3.0,
            _ => f64::INFINITY,
        }
    }

    /// (φ'(r), φ''(r)) for radial profiles, r > 0.
    fn radial_derivatives(&self, r: f64) -> (f64, f64) {
        match self {
            TestFunction::RadialPower { coeff, exponent: p } => (
                coeff * p * r.powf(p - 1.0),
                coeff * p * (p - 1.0) * r.powf(p - 2.0),
            ),
            TestFunction::RadialLogSquared { coeff, big_r } => {
                let l = (big_r / r).ln();
                let (l2, l3, l4) = (l.powi(-2), l.powi(-3), l.powi(-4));
                (
                    coeff * (2.0 * r * l2 + 2.0 * r * l3),
                    coeff * (2.0 * l2 + 6.0 * l3 + 6.0 * l4),
                )
            }
            _ => unreachable!("radial derivatives requested for a non-radial function"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_derivatives(f: &TestFunction, x: [f64; 2]) {
        let h = 1e-5;
        let g = f.gradient(x).unwrap();
        let hs = f.hessian(x).unwrap();
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (f.value(xp) - f.value(xm)) / (2.0 * h);
            assert!(
                (fd - g[k]).abs() < 1e-7 * (1.0 + g[k].abs()),
                "{f:?} grad {k}"
            );
            let gp = f.gradient(xp).unwrap();
            let gm = f.gradient(xm).unwrap();
            for l in 0..2 {
                let fd2 = (gp[l] - gm[l]) / (2.0 * h);
                assert!(
                    (fd2 - hs.get(k, l)).abs() < 1e-6 * (1.0 + fd2.abs()),
                    "{f:?} hess {k}{l}"
                );
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let fs = [
            TestFunction::harmonic_cubic(),
            TestFunction::polynomial(&[(0.5, 2, 0), (-0.5, 0, 2), (1.0 / 12.0, 4, 0), (0.3, 2, 3)]),
            TestFunction::quadratic(
                SymMatrix::from_rows(&[vec![1.0, 0.4], vec![0.4, -2.0]]).unwrap(),
            ),
            TestFunction::sqrt_hessian_modulus(),
            TestFunction::log_hessian_modulus(),
            TestFunction::RadialPower {
                coeff: 2.0,
                exponent: 0.5,
            },
        ];
        for f in &fs {
            for x in [[0.3, -0.2], [-0.7, 0.1], [0.05, 0.6]] {
                check_derivatives(f, x);
            }
        }
    }

    #[test]
    fn radial_origin_behaviour() {
        let f = TestFunction::sqrt_hessian_modulus();
        assert_eq!(f.hessian([0.0, 0.0]).unwrap(), SymMatrix::zeros(2));
        let g = TestFunction::RadialPower {
            coeff: 1.0,
            exponent: 0.5,
        };
        assert!(g.gradient([0.0, 0.0]).is_err());
        assert_eq!(
            TestFunction::log_hessian_modulus()
                .hessian([0.0, 0.0])
                .unwrap(),
            SymMatrix::zeros(2)
        );
    }

    #[test]
    fn hessian_of_sqrt_profile_has_half_power_modulus() {
        // |D²u(x) − D²u(0)| = c·r^{1/2} along any ray.
        let f = TestFunction::sqrt_hessian_modulus();
        let a = f.hessian([0.01, 0.0]).unwrap().frobenius() / 0.01f64.sqrt();
        let b = f.hessian([0.0001, 0.0]).unwrap().frobenius() / 0.0001f64.sqrt();
        assert!((a - b).abs() < 1e-12 * a);
    }
}
