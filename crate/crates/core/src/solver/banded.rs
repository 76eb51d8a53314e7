//! Band LU factorization with partial pivoting.
//!
//! Column-major band storage with `kl` extra superdiagonals reserved for
//! pivoting fill, so entry `(i, j)` lives at `j·ldab + (kl + ku + i − j)`
//! for `j − kl − ku <= i <= j + kl`.

#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularPivot {
    pub column: usize,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; n * ldab],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    /// Adds `v` at `(i, j)`; the entry must lie within the declared band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(
            i <= j + self.kl && j <= i + self.ku,
            "({i}, {j}) outside band"
        );
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i > j + self.kl || j > i + self.ku {
            0.0
        } else {
            self.ab[self.idx(i, j)]
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (j, &xj) in x.iter().enumerate() {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for (i, yi) in y.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *yi += self.ab[self.idx(i, j)] * xj;
            }
        }
        y
    }

    pub fn factor(mut self) -> Result<BandLu, SingularPivot> {
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let kv = kl + ku;
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        let scale = self.ab.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = scale * f64::EPSILON * n as f64;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ldab + kv;
            let mut jp = 0;
            let mut best = self.ab[col].abs();
            for r in 1..=km {
                let v = self.ab[col + r].abs();
                if v > best {
                    best = v;
                    jp = r;
                }
            }
            ipiv[j] = j + jp;
            if !(best > tiny) {
                return Err(SingularPivot { column: j });
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[col];
            for r in 1..=km {
                self.ab[col + r] /= pivot;
            }
            for c in j + 1..=ju {
                let ujc = self.ab[self.idx(j, c)];
                if ujc == 0.0 {
                    continue;
                }
                let base = self.idx(j, c);
                for r in 1..=km {
                    self.ab[base + r] -= self.ab[col + r] * ujc;
                }
            }
        }
        Ok(BandLu { m: self, ipiv })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    m: BandMatrix,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, b: &mut [f64]) {
        let BandMatrix { n, kl, ku, .. } = self.m;
        let kv = kl + ku;
        for j in 0..n {
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
            let bj = b[j];
            if bj != 0.0 {
                let lm = kl.min(n - 1 - j);
                let col = self.m.idx(j, j);
                for r in 1..=lm {
                    b[j + r] -= self.m.ab[col + r] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.m.ab[self.m.idx(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    b[i] -= self.m.ab[self.m.idx(i, j)] * bj;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_random_banded_systems_needing_pivots() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, kl, ku) in &[(1, 0, 0), (7, 1, 1), (40, 3, 2), (60, 6, 6)] {
            let mut a = BandMatrix::zeros(n, kl, ku);
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                    // Small diagonal forces row interchanges.
                    let v: f64 = if i == j {
                        1e-3 * rng.gen::<f64>()
                    } else {
                        rng.gen_range(-1.0..1.0)
                    };
                    a.add(i, j, v);
                    dense[i][j] = v;
                }
            }
            let x: Vec<f64> = (0..n).map(|k| (k as f64 * 0.37).sin()).collect();
            let mut b: Vec<f64> = dense
                .iter()
                .map(|row| row.iter().zip(&x).map(|(a, x)| a * x).sum())
                .collect();
            assert_eq!(a.mul_vec(&x).len(), n);
            let lu = a.factor().unwrap();
            lu.solve(&mut b);
            let err = b
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "n={n} err={err}");
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut a = BandMatrix::zeros(3, 1, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        assert_eq!(a.factor().unwrap_err(), SingularPivot { column: 2 });
    }
}
