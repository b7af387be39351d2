//! Thin wrappers around the dense and sparse factorizations used by the solvers.

use faer::linalg::solvers::PartialPivLu;
use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;

use crate::error::{HomogError, Result};

/// Row-major dense square matrix.
#[derive(Clone, Debug)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    /// `y = M x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `y = M^T x`
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, xi) in x.iter().enumerate() {
            for (yj, a) in y.iter_mut().zip(self.row(i)) {
                *yj += a * xi;
            }
        }
        y
    }

    /// `x . M x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        x.iter().zip(self.mul_vec(x)).map(|(a, b)| a * b).sum()
    }

    /// `x . M y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(self.mul_vec(y)).map(|(a, b)| a * b).sum()
    }

    pub fn factorize(&self) -> DenseLu {
        let m = Mat::<f64>::from_fn(self.n, self.n, |i, j| self.get(i, j));
        DenseLu { n: self.n, lu: m.partial_piv_lu() }
    }
}

/// LU factorization with partial pivoting.
pub struct DenseLu {
    n: usize,
    lu: PartialPivLu<f64>,
}

impl DenseLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve_transpose(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Sparse matrix in compressed-column form; duplicate triplets are summed.
pub struct SparseMatrix {
    n: usize,
    mat: SparseColMat<usize, f64>,
}

impl SparseMatrix {
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let trip: Vec<Triplet<usize, usize, f64>> =
            entries.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let mat = SparseColMat::try_new_from_triplets(n, n, &trip).map_err(|e| HomogError::Solver {
            stage: "sparse assembly",
            message: format!("{e:?}"),
        })?;
        Ok(SparseMatrix { n, mat })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.mat.compute_nnz()
    }

    /// `y = M x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        let sym = self.mat.symbolic();
        let vals = self.mat.val();
        for j in 0..self.n {
            let range = sym.col_range(j);
            for (r, v) in sym.row_idx()[range.clone()].iter().zip(&vals[range]) {
                y[*r] += v * x[j];
            }
        }
        y
    }

    /// `y = M^T x`
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        let sym = self.mat.symbolic();
        let vals = self.mat.val();
        (0..self.n)
            .map(|j| {
                let range = sym.col_range(j);
                sym.row_idx()[range.clone()]
                    .iter()
                    .zip(&vals[range])
                    .map(|(r, v)| v * x[*r])
                    .sum()
            })
            .collect()
    }

    /// `x . M y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(self.mul_vec(y)).map(|(a, b)| a * b).sum()
    }

    pub fn lu(&self, stage: &'static str) -> Result<SparseLu> {
        let lu = self.mat.sp_lu().map_err(|e| HomogError::Solver {
            stage,
            message: format!("sparse LU failed: {e:?}"),
        })?;
        Ok(SparseLu { n: self.n, lu })
    }

    pub fn cholesky(&self, stage: &'static str) -> Result<SparseCholesky> {
        let llt = self.mat.sp_cholesky(Side::Lower).map_err(|e| HomogError::Solver {
            stage,
            message: format!("sparse Cholesky failed: {e:?}"),
        })?;
        Ok(SparseCholesky { n: self.n, llt })
    }
}

pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

pub struct SparseCholesky {
    n: usize,
    llt: Llt<usize, f64>,
}

impl SparseCholesky {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.llt.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solves_both_orientations() {
        let mut m = DenseMatrix::zeros(3);
        let vals = [[4.0, 1.0, 0.5], [0.0, 3.0, 1.0], [2.0, 0.0, 5.0]];
        for i in 0..3 {
            for j in 0..3 {
                m.set(i, j, vals[i][j]);
            }
        }
        let lu = m.factorize();
        let b = [1.0, 2.0, 3.0];
        let x = lu.solve(&b);
        let xt = lu.solve_transpose(&b);
        for (got, want) in m.mul_vec(&x).iter().zip(b) {
            assert!((got - want).abs() < 1e-14);
        }
        for (got, want) in m.mul_transpose_vec(&xt).iter().zip(b) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn sparse_sums_duplicates_and_solves() {
        let s = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 4.0), (0, 1, 1.0)]).unwrap();
        let x = s.lu("test").unwrap().solve(&[1.0, 2.0]);
        let y = s.mul_vec(&x);
        assert!((y[0] - 1.0).abs() < 1e-15 && (y[1] - 2.0).abs() < 1e-15);
        assert_eq!(s.mul_transpose_vec(&[1.0, 0.0]), vec![3.0, 1.0]);
    }

    #[test]
    fn sparse_cholesky_spd() {
        let s = SparseMatrix::from_triplets(2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)]).unwrap();
        let x = s.cholesky("test").unwrap().solve(&[1.0, 1.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }
}
