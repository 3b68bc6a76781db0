//! Small dense linear algebra helpers on top of `nalgebra`.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Condition number (1-norm) above which a linear solve is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Dense cubic tensor `t[i][j][k]`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    t.data[(i * dim + j) * dim + k] = f(i, j, k);
                }
            }
        }
        t
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.dim + j) * self.dim + k] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.dim + j) * self.dim + k] += v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// `out_i = sum_{jk} t_ijk a_j b_k`.
    pub fn contract_pair(&self, a: &[f64], b: &[f64]) -> Vector {
        let d = self.dim;
        Vector::from_fn(d, |i, _| {
            let mut acc = 0.0;
            for j in 0..d {
                for k in 0..d {
                    acc += self.get(i, j, k) * a[j] * b[k];
                }
            }
            acc
        })
    }

    /// The matrix slice `t[·][j][k]` as a vector over the first index.
    pub fn fiber(&self, j: usize, k: usize) -> Vector {
        Vector::from_fn(self.dim, |i, _| self.get(i, j, k))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

pub fn norm1(m: &Matrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `A X = I` by LU with partial pivoting. Fails with
/// [`Error::Degenerate`] when the 1-norm condition number of `A` exceeds
/// [`MAX_CONDITION`].
pub fn solve_identity(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let lu = a.clone().lu();
    let inv = lu
        .solve(&Matrix::identity(n, n))
        .ok_or(Error::Degenerate { cond: f64::INFINITY })?;
    let cond = norm1(a) * norm1(&inv);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::Degenerate { cond });
    }
    Ok(inv)
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex<f64>>> {
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1e-14, 10_000).ok_or(Error::Eigen)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_solve_and_eigen() {
        let a = Matrix::identity(3, 3);
        assert_eq!(solve_identity(&a).unwrap(), a);
        let ev = eigenvalues(&a).unwrap();
        assert!(ev.iter().all(|z| (z.re - 1.0).abs() < 1e-14 && z.im == 0.0));
    }

    #[test]
    fn singular_matrix_is_degenerate() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(solve_identity(&a), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn solve_is_an_inverse() {
        let a = Matrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, -1.0, 3.0, 0.2, 0.3, 0.1, 2.0]);
        let x = solve_identity(&a).unwrap();
        assert!(max_abs(&(&a * &x - Matrix::identity(3, 3))) < 1e-14);
    }

    #[test]
    fn tensor_contraction() {
        let t = Tensor3::from_fn(2, |i, j, k| (i + 2 * j + 3 * k) as f64);
        let v = t.contract_pair(&[1.0, 2.0], &[0.5, -1.0]);
        // brute force
        let mut e = [0.0; 2];
        for (i, ei) in e.iter_mut().enumerate() {
            for (j, a) in [1.0, 2.0].iter().enumerate() {
                for (k, b) in [0.5, -1.0].iter().enumerate() {
                    *ei += (i + 2 * j + 3 * k) as f64 * a * b;
                }
            }
        }
        assert_eq!(v.as_slice(), &e);
    }
}
