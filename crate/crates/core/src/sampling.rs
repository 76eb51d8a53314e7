//! Seeded sampling plans for suprema over `Sym(n)`.
//!
//! Every sampled supremum in the crate goes through a [`SamplePlan`] so that
//! serial and repeated runs see the exact same matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::operators::SymMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplePlan {
    pub seed: u64,
    /// Gaussian symmetric matrices with entry scale `scale`.
    pub gaussian: usize,
    /// Rank-one rays `t·vvᵀ`, |v| = 1, with t on a geometric ladder up to `t_max`.
    pub rays: usize,
    /// Scaled identities `±t·Id` on the same ladder.
    pub identities: usize,
    pub scale: f64,
    pub t_max: f64,
    /// Points x sampled in the closed ball of radius `point_radius`.
    pub points: usize,
    pub point_radius: f64,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan {
            seed: 0x5EED,
            gaussian: 400,
            rays: 100,
            identities: 40,
            scale: 2.0,
            t_max: 1e4,
            points: 8,
            point_radius: 1.0,
        }
    }
}

impl SamplePlan {
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// The mixture of Gaussian matrices, rank-one rays and scaled identities.
    pub fn matrices(&self, n: usize) -> Vec<SymMatrix> {
        let mut rng = self.rng();
        let mut out = Vec::with_capacity(self.gaussian + self.rays + self.identities);
        for _ in 0..self.gaussian {
            out.push(gaussian_sym(&mut rng, n, self.scale));
        }
        for k in 0..self.rays {
            let v = unit_vector(&mut rng, n);
            let t = ladder(k, self.rays, self.t_max);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            out.push((sign * t) * SymMatrix::outer(&v));
        }
        for k in 0..self.identities {
            let t = ladder(k / 2, self.identities.div_ceil(2), self.t_max);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            out.push(SymMatrix::scaled_identity(n, sign * t));
        }
        out
    }

    /// Points in the closed ball; the origin is always included first.
    pub fn points(&self, n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9E37_79B9_7F4A_7C15);
        let mut out = vec![vec![0.0; n]];
        for _ in 1..self.points.max(1) {
            let v = unit_vector(&mut rng, n);
            let r: f64 = self.point_radius * rng.gen::<f64>().powf(1.0 / n as f64);
            out.push(v.into_iter().map(|c| c * r).collect());
        }
        out
    }
}

/// t_k on a geometric ladder from 1e-2 up to t_max.
fn ladder(k: usize, count: usize, t_max: f64) -> f64 {
    if count <= 1 {
        return t_max;
    }
    let lo = 1e-2f64.ln();
    let hi = t_max.ln();
    (lo + (hi - lo) * k as f64 / (count - 1) as f64).exp()
}

pub fn gaussian_sym<R: Rng>(rng: &mut R, n: usize, scale: f64) -> SymMatrix {
    let mut m = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let z: f64 = rng.sample(StandardNormal);
            let s = if i == j {
                scale
            } else {
                scale / std::f64::consts::SQRT_2
            };
            m.set(i, j, s * z);
        }
    }
    m
}

pub fn unit_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|c| c / norm).collect();
        }
    }
}

/// Positive semidefinite `BBᵀ` with B of random rank in 1..=n, scaled so
/// that its trace is of order `scale`.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize, scale: f64) -> SymMatrix {
    let rank = rng.gen_range(1..=n);
    let mut m = SymMatrix::zeros(n);
    for _ in 0..rank {
        let v: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        m += (scale / rank as f64) * SymMatrix::outer(&v);
    }
    m
}
