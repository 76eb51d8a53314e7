//! Numerical laboratory for Schauder-type regularity of flat solutions to
//! fully nonlinear elliptic equations
//!
//! ```text
//! F(D²u, x) + ⟨B(x), Du⟩ = f(x)   in B₁ ⊂ ℝⁿ
//! ```
//!
//! The crate is split along the objects such an experiment needs:
//!
//! - [`moduli`]: moduli of continuity, Dini integrals, the ψ-transform and
//!   finite certification of the nullity/compatibility conditions.
//! - [`operators`]: symmetric matrices, Pucci extremal operators, operator
//!   descriptors and sampled structural checks (ellipticity, Gâteaux
//!   derivatives, tangential limits, coefficient oscillation).
//! - [`fields`]: grid-sampled fields, ball-averaged Lᵖ norms and
//!   finite-difference jets.
//! - [`solver`]: damped Newton solver for the discrete equation, the linear
//!   tangential solver and a manufactured-solution harness.
//! - [`campanato`]: constrained quadratic fitting and the dyadic decay audit.

// NaN-rejecting checks are written as `!(x > 0.0)`; index loops mirror the
// formulas they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod campanato;
pub mod fields;
pub mod moduli;
pub mod operators;
pub mod sampling;
pub mod solver;

use serde::{Deserialize, Serialize};

/// Outcome of a finite (sampled) certification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}
