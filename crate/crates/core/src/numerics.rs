//! Small dense linear algebra: tolerance-based rank, least-norm solves,
//! symmetric eigenvalues, and square solves with a conditioning guard.
//!
//! Storage is a plain row-major [`DenseMatrix`]; factorizations are delegated
//! to `nalgebra`.

use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative singular-value cutoff used when callers have no better choice.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Condition-number ceiling for [`solve_linear`].
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("matrix is singular or ill-conditioned (condition estimate {0:e})")]
    IllConditioned(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::Dimension(format!(
                "{rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Panics on ragged input; intended for literals.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        DenseMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn column_vector(v: &[f64]) -> Self {
        DenseMatrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if x.len() != self.cols {
            return Err(NumericsError::Dimension(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `[self | other]`.
    pub fn hstack(&self, other: &DenseMatrix) -> Result<Self, NumericsError> {
        if self.rows != other.rows {
            return Err(NumericsError::Dimension(format!(
                "cannot append {} rows to {} rows",
                other.rows, self.rows
            )));
        }
        let cols = self.cols + other.cols;
        let mut out = Self::zeros(self.rows, cols);
        for i in 0..self.rows {
            out.data[i * cols..i * cols + self.cols].copy_from_slice(self.row(i));
            out.data[i * cols + self.cols..(i + 1) * cols].copy_from_slice(other.row(i));
        }
        Ok(out)
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &DenseMatrix) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.sub(other).max_abs()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    fn check_finite(&self) -> Result<(), NumericsError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(p) => Err(NumericsError::NonFinite {
                row: p / self.cols.max(1),
                col: p % self.cols.max(1),
            }),
            None => Ok(()),
        }
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    if m.rows == 0 || m.cols == 0 {
        return Vec::new();
    }
    m.to_nalgebra().singular_values().iter().copied().collect()
}

/// Number of singular values above `tol` times the largest one.
pub fn rank(m: &DenseMatrix, tol: f64) -> Result<usize, NumericsError> {
    if !(tol > 0.0) {
        return Err(NumericsError::BadTolerance(tol));
    }
    m.check_finite()?;
    let sv = singular_values(m);
    let top = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > tol * top).count())
}

/// Outcome of [`least_norm_solve`].
#[derive(Debug, Clone, PartialEq)]
pub enum LeastNorm {
    Solved { x: Vec<f64>, residual: f64 },
    Infeasible { residual: f64 },
}

impl LeastNorm {
    pub fn solution(&self) -> Option<&[f64]> {
        match self {
            LeastNorm::Solved { x, .. } => Some(x),
            LeastNorm::Infeasible { .. } => None,
        }
    }

    pub fn residual(&self) -> f64 {
        match self {
            LeastNorm::Solved { residual, .. } | LeastNorm::Infeasible { residual } => *residual,
        }
    }
}

/// Minimum 2-norm solution of `a x = b` through the truncated pseudo-inverse.
///
/// Singular values at or below `tol * sigma_max` are dropped. The system is
/// reported infeasible when `‖a x − b‖ > tol · (1 + ‖b‖)`.
pub fn least_norm_solve(a: &DenseMatrix, b: &[f64], tol: f64) -> Result<LeastNorm, NumericsError> {
    if !(tol > 0.0) {
        return Err(NumericsError::BadTolerance(tol));
    }
    if b.len() != a.rows {
        return Err(NumericsError::Dimension(format!(
            "right-hand side has {} entries for {} rows",
            b.len(),
            a.rows
        )));
    }
    a.check_finite()?;
    let b_norm = norm(b);
    if a.cols == 0 {
        return Ok(if b_norm <= tol {
            LeastNorm::Solved {
                x: Vec::new(),
                residual: b_norm,
            }
        } else {
            LeastNorm::Infeasible { residual: b_norm }
        });
    }
    let svd = a.to_nalgebra().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let top = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let mut x = vec![0.0; a.cols];
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if top == 0.0 || s <= tol * top {
            continue;
        }
        let coef: f64 = (0..a.rows).map(|i| u[(i, k)] * b[i]).sum::<f64>() / s;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj += coef * v_t[(k, j)];
        }
    }
    let ax = a.mul_vec(&x)?;
    let residual = norm(&ax.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>());
    Ok(if residual <= tol * (1.0 + b_norm) {
        LeastNorm::Solved { x, residual }
    } else {
        LeastNorm::Infeasible { residual }
    })
}

/// Orthonormal basis (as vectors) of the numerical null space of `a`.
pub fn null_space(a: &DenseMatrix, tol: f64) -> Vec<Vec<f64>> {
    if a.cols == 0 {
        return Vec::new();
    }
    // Pad with zero rows so the thin SVD returns all right singular vectors.
    let padded = if a.rows < a.cols {
        let mut p = DenseMatrix::zeros(a.cols, a.cols);
        p.set_block(0, 0, a);
        p
    } else {
        a.clone()
    };
    let svd = padded.to_nalgebra().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let top = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| top == 0.0 || s <= tol * top)
        .map(|(k, _)| (0..a.cols).map(|j| v_t[(k, j)]).collect())
        .collect()
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DenseMatrix) -> Result<Vec<f64>, NumericsError> {
    if m.rows != m.cols {
        return Err(NumericsError::Dimension(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    m.check_finite()?;
    let asym = m.max_abs_diff(&m.transpose());
    if asym > 1e-10 {
        return Err(NumericsError::Asymmetric(asym));
    }
    if m.rows == 0 {
        return Ok(Vec::new());
    }
    let mut eig: Vec<f64> = m.to_nalgebra().symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Solves a square system with LU, refusing condition numbers above
/// [`MAX_CONDITION`].
pub fn solve_linear(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if a.rows != a.cols || b.len() != a.rows {
        return Err(NumericsError::Dimension(format!(
            "square solve with {}x{} matrix and {} right-hand entries",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    a.check_finite()?;
    let sv = singular_values(a);
    let hi = sv.iter().fold(0.0f64, |m, &s| m.max(s));
    let lo = sv.iter().fold(f64::INFINITY, |m, &s| m.min(s));
    let cond = if lo == 0.0 { f64::INFINITY } else { hi / lo };
    if !(cond <= MAX_CONDITION) {
        return Err(NumericsError::IllConditioned(cond));
    }
    let rhs = nalgebra::DVector::from_column_slice(b);
    let x = a
        .to_nalgebra()
        .lu()
        .solve(&rhs)
        .ok_or(NumericsError::IllConditioned(f64::INFINITY))?;
    Ok(x.iter().copied().collect())
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
