use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::OperatorError;

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 4;
const PACKED: usize = MAX_DIM * (MAX_DIM + 1) / 2;

/// Symmetric `n × n` matrix, `2 <= n <= 4`, stored as its packed upper
/// triangle. Asymmetric matrices are not representable.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    n: usize,
    data: [f64; PACKED],
}

impl std::fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

#[inline]
fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * i.saturating_sub(1) / 2 + j - i
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(
            (MIN_DIM..=MAX_DIM).contains(&n),
            "dimension {n} unsupported"
        );
        SymMatrix {
            n,
            data: [0.0; PACKED],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, s);
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds from full rows; the input must be square and symmetric to 1e-12
    /// relative.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, OperatorError> {
        let n = rows.len();
        if !(MIN_DIM..=MAX_DIM).contains(&n) || rows.iter().any(|r| r.len() != n) {
            return Err(OperatorError::Dimension(format!(
                "expected a square matrix with 2 <= n <= 4, got {n} rows"
            )));
        }
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let (a, b) = (rows[i][j], rows[j][i]);
                if !a.is_finite() || (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(OperatorError::Dimension(format!(
                        "matrix is not symmetric and finite at ({i}, {j})"
                    )));
                }
                m.set(i, j, a);
            }
        }
        Ok(m)
    }

    /// Symmetric basis element: `e_i e_iᵀ` for `i == j`, `e_i e_jᵀ + e_j e_iᵀ` otherwise.
    pub fn basis(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n);
        m.set(i, j, 1.0);
        m
    }

    pub fn outer(v: &[f64]) -> Self {
        let mut m = Self::zeros(v.len());
        for i in 0..v.len() {
            for j in i..v.len() {
                m.set(i, j, v[i] * v[j]);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[packed_index(self.n, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[packed_index(self.n, i, j)] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    fn packed(&self) -> &[f64] {
        &self.data[..self.n * (self.n + 1) / 2]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// tr(AB) = Σᵢⱼ AᵢⱼBᵢⱼ.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        debug_assert_eq!(self.n, other.n);
        let mut s = 0.0;
        for i in 0..self.n {
            s += self.get(i, i) * other.get(i, i);
            for j in i + 1..self.n {
                s += 2.0 * self.get(i, j) * other.get(i, j);
            }
        }
        s
    }

    pub fn frobenius(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.packed().iter().all(|v| v.is_finite())
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Symmetric part of a square matrix.
    pub fn from_dmatrix(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, 0.5 * (a[(i, j)] + a[(j, i)]));
            }
        }
        m
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.n == 2 {
            // Closed form for the common planar case.
            let (a, b, c) = (self.get(0, 0), self.get(0, 1), self.get(1, 1));
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            return vec![mean - rad, mean + rad];
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(self.to_dmatrix())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Eigenvalues (ascending) and orthonormal eigenvectors as columns.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let se = SymmetricEigen::new(self.to_dmatrix());
        let mut idx: Vec<usize> = (0..self.n).collect();
        idx.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let vals = idx.iter().map(|&i| se.eigenvalues[i]).collect();
        let vecs = DMatrix::from_fn(self.n, self.n, |r, c| se.eigenvectors[(r, idx[c])]);
        (vals, vecs)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues()[self.n - 1]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = *self;
        for v in &mut out.data[..self.n * (self.n + 1) / 2] {
            *v = f(*v);
        }
        out
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = OperatorError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        SymMatrix::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.rows()
    }
}

impl Add for SymMatrix {
    type Output = SymMatrix;
    fn add(mut self, rhs: SymMatrix) -> SymMatrix {
        self += rhs;
        self
    }
}

impl AddAssign for SymMatrix {
    fn add_assign(&mut self, rhs: SymMatrix) {
        debug_assert_eq!(self.n, rhs.n);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += b;
        }
    }
}

impl Sub for SymMatrix {
    type Output = SymMatrix;
    fn sub(mut self, rhs: SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.n, rhs.n);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a -= b;
        }
        self
    }
}

impl Neg for SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        self.map(|v| -v)
    }
}

impl Mul<SymMatrix> for f64 {
    type Output = SymMatrix;
    fn mul(self, rhs: SymMatrix) -> SymMatrix {
        rhs.map(|v| self * v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_layout_covers_upper_triangle() {
        for n in MIN_DIM..=MAX_DIM {
            let mut seen = vec![false; n * (n + 1) / 2];
            for i in 0..n {
                for j in i..n {
                    let k = packed_index(n, i, j);
                    assert!(!seen[k], "collision n={n} ({i},{j})");
                    seen[k] = true;
                    assert_eq!(k, packed_index(n, j, i));
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn trace_dot_and_norm() {
        let a = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 3.0]]).unwrap();
        assert_eq!(a.trace(), 4.0);
        assert_eq!(a.dot(&SymMatrix::identity(2)), 4.0);
        assert!((a.frobenius() - (1.0f64 + 4.0 + 4.0 + 9.0).sqrt()).abs() < 1e-15);
        assert!(SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.5, 3.0]]).is_err());
    }

    #[test]
    fn eigenvalues_of_known_matrices() {
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = a.eigenvalues();
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
        let b = SymMatrix::diag(&[3.0, -1.0, 2.0]);
        let e = b.eigenvalues();
        assert!((e[0] + 1.0).abs() < 1e-14 && (e[2] - 3.0).abs() < 1e-14);
        let (vals, vecs) = b.eigen();
        let recon =
            &vecs * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals)) * vecs.transpose();
        assert!((SymMatrix::from_dmatrix(&recon) - b).frobenius() < 1e-12);
    }

    #[test]
    fn off_diagonal_basis_is_symmetric_pair() {
        let e = SymMatrix::basis(3, 0, 2);
        assert_eq!(e.get(2, 0), 1.0);
        assert_eq!(e.dot(&e), 2.0);
    }
}
