//! Dense matrix primitives: the SVD pseudoinverse, numerical rank, the
//! Frobenius training error and the orthogonal projector `Y Y⁺`.
//!
//! Every training algorithm in this crate reduces to these four operations.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PilError, Result};

/// Dense real matrix with at least one row and one column and finite entries.
///
/// Thin newtype over [`nalgebra::DMatrix`]; the checked constructors reject
/// empty shapes and NaN/Inf entries.
#[derive(Clone, PartialEq)]
pub struct Matrix(DMatrix<f64>);

impl Matrix {
    /// Builds a matrix from row-major data.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(PilError::InvalidMatrix(format!(
                "shape {rows}x{cols} has no entries"
            )));
        }
        if data.len() != rows * cols {
            return Err(PilError::InvalidMatrix(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Self::checked(DMatrix::from_row_slice(rows, cols, data))
    }

    /// Builds a matrix from a list of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if let Some((i, r)) = rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.as_ref().len() != cols)
        {
            return Err(PilError::InvalidMatrix(format!(
                "row {i} has {} entries, expected {cols}",
                r.as_ref().len()
            )));
        }
        let data: Vec<f64> = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::from_row_slice(rows.len(), cols, &data)
    }

    /// Wraps an nalgebra matrix, validating shape and finiteness.
    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(PilError::InvalidMatrix(format!(
                "shape {}x{} has no entries",
                m.nrows(),
                m.ncols()
            )));
        }
        Self::checked(m)
    }

    fn checked(m: DMatrix<f64>) -> Result<Self> {
        if let Some(idx) = m.iter().position(|v| !v.is_finite()) {
            // nalgebra storage is column-major
            let (r, c) = (idx % m.nrows(), idx / m.nrows());
            return Err(PilError::InvalidMatrix(format!(
                "non-finite entry {} at ({r}, {c})",
                m[(r, c)]
            )));
        }
        Ok(Matrix(m))
    }

    /// Internal constructor for results of arithmetic on valid matrices.
    /// Callers that can produce non-finite values must go through
    /// [`Matrix::from_dmatrix`] instead.
    pub(crate) fn wrap(m: DMatrix<f64>) -> Self {
        debug_assert!(m.nrows() > 0 && m.ncols() > 0);
        Matrix(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::wrap(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::wrap(DMatrix::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::from_dmatrix(DMatrix::from_fn(rows, cols, f))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().as_slice().to_vec()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }

    pub fn transpose(&self) -> Matrix {
        Self::wrap(self.0.transpose())
    }

    /// Matrix product, checking inner dimensions.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols() != rhs.rows() {
            return Err(PilError::shape(
                "matrix product",
                format!("{} rows on the right operand", self.cols()),
                format!("{}", rhs.rows()),
            ));
        }
        Self::from_dmatrix(&self.0 * &rhs.0)
    }

    /// Entrywise difference, checking shapes.
    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.same_shape(rhs, "matrix difference")?;
        Self::from_dmatrix(&self.0 - &rhs.0)
    }

    /// Entrywise sum, checking shapes.
    pub fn add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.same_shape(rhs, "matrix sum")?;
        Self::from_dmatrix(&self.0 + &rhs.0)
    }

    pub(crate) fn same_shape(&self, rhs: &Matrix, context: &str) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(PilError::shape(
                context,
                format!("{}x{}", self.rows(), self.cols()),
                format!("{}x{}", rhs.rows(), rhs.cols()),
            ));
        }
        Ok(())
    }

    /// Applies `f` to every entry; fails if any result is non-finite.
    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Result<Matrix> {
        Self::from_dmatrix(self.0.map(f))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// First `n` columns.
    pub fn leading_columns(&self, n: usize) -> Result<Matrix> {
        if n == 0 || n > self.cols() {
            return Err(PilError::shape(
                "column selection",
                format!("1..={} columns", self.cols()),
                n,
            ));
        }
        Ok(Self::wrap(self.0.columns(0, n).into_owned()))
    }

    /// Inserts a constant column at index `at`.
    pub fn insert_constant_column(&self, at: usize, value: f64) -> Matrix {
        Self::wrap(self.0.clone().insert_column(at, value))
    }

    /// Removes the column at index `at`.
    pub fn remove_column(&self, at: usize) -> Result<Matrix> {
        if self.cols() < 2 || at >= self.cols() {
            return Err(PilError::shape(
                "column removal",
                format!("a column index below {} on a matrix with >= 2 columns", self.cols()),
                at,
            ));
        }
        Ok(Self::wrap(self.0.clone().remove_column(at)))
    }

    /// True when every entry of `self` and `other` has the same bit pattern.
    pub fn bitwise_eq(&self, other: &Matrix) -> bool {
        self.shape() == other.shape()
            && self
                .0
                .iter()
                .zip(other.0.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{:?}", self.shape())?;
        fmt::Display::fmt(&self.0, f)
    }
}

/// Singular spectrum summary of a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankInfo {
    pub numerical_rank: usize,
    /// Singular values in descending order.
    pub singular_values: Vec<f64>,
    pub tolerance_used: f64,
    /// `σ_max / σ_min` over the retained singular values; infinite when the
    /// rank is zero (serialized as `null`).
    pub condition_estimate: f64,
}

impl RankInfo {
    pub fn is_full_row_rank(&self, rows: usize) -> bool {
        self.numerical_rank == rows
    }
}

/// Thin SVD `A = U Σ Vᵀ` with singular values sorted in descending order.
struct ThinSvd {
    u: DMatrix<f64>,
    singular_values: Vec<f64>,
    v_t: DMatrix<f64>,
}

fn thin_svd(a: &Matrix) -> Result<ThinSvd> {
    let m = &a.0;
    let f = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let svd = f
        .thin_svd()
        .map_err(|e| PilError::Numerical(format!("SVD failed to converge: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..s.nrows()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let singular_values = order.iter().map(|&i| s[i]).collect();
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v_t = DMatrix::from_fn(order.len(), v.nrows(), |r, c| v[(c, order[r])]);
    Ok(ThinSvd {
        u,
        singular_values,
        v_t,
    })
}

/// The default cutoff `max(rows, cols) · σ_max · ε`.
pub fn default_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * f64::EPSILON
}

fn resolve_tolerance(a: &Matrix, sigma: &[f64], tol: Option<f64>) -> Result<f64> {
    match tol {
        Some(t) if !(t > 0.0 && t.is_finite()) => Err(PilError::InvalidMatrix(format!(
            "rank tolerance must be positive and finite, got {t}"
        ))),
        Some(t) => Ok(t),
        None => Ok(default_tolerance(
            a.rows(),
            a.cols(),
            sigma.first().copied().unwrap_or(0.0),
        )),
    }
}

/// Moore–Penrose pseudoinverse via the SVD.
///
/// Singular values `<= tol` are treated as zero. The default tolerance is
/// [`default_tolerance`]. The zero matrix maps to the zero matrix of the
/// transposed shape.
pub fn pseudoinverse(a: &Matrix, tol: Option<f64>) -> Result<Matrix> {
    let svd = thin_svd(a)?;
    let tol = resolve_tolerance(a, &svd.singular_values, tol)?;
    let k = svd.singular_values.len();
    // V Σ⁺ Uᵀ, accumulated column by column of V.
    let mut scaled_v = svd.v_t.transpose();
    for (j, &s) in svd.singular_values.iter().enumerate() {
        let inv = if s > tol { 1.0 / s } else { 0.0 };
        scaled_v.column_mut(j).scale_mut(inv);
    }
    debug_assert_eq!(scaled_v.ncols(), k);
    Matrix::from_dmatrix(scaled_v * svd.u.transpose())
}

/// Numerical rank: the count of singular values strictly above `tol`.
pub fn numerical_rank(a: &Matrix, tol: Option<f64>) -> Result<RankInfo> {
    let svd = thin_svd(a)?;
    let tol = resolve_tolerance(a, &svd.singular_values, tol)?;
    let retained: Vec<f64> = svd
        .singular_values
        .iter()
        .copied()
        .filter(|&s| s > tol)
        .collect();
    let condition_estimate = match (retained.first(), retained.last()) {
        (Some(max), Some(min)) => max / min,
        _ => f64::INFINITY,
    };
    Ok(RankInfo {
        numerical_rank: retained.len(),
        singular_values: svd.singular_values,
        tolerance_used: tol,
        condition_estimate,
    })
}

/// Training error `(1 / 2N) · ‖O − T‖_F²` where `N` is the row count.
pub fn frobenius_error(o: &Matrix, t: &Matrix) -> Result<f64> {
    o.same_shape(t, "frobenius error")?;
    let sq = (&o.0 - &t.0).norm_squared();
    Ok(sq / (2.0 * o.rows() as f64))
}

/// Orthogonal projector `Y Y⁺` onto the column space of `y`.
pub fn projector(y: &Matrix) -> Result<Matrix> {
    y.matmul(&pseudoinverse(y, None)?)
}

/// `‖Y Y⁺ − I_N‖_F²`; zero up to rounding exactly when `y` has full row rank.
pub fn projector_residual(y: &Matrix) -> Result<f64> {
    projector_residual_with(y, &pseudoinverse(y, None)?)
}

/// [`projector_residual`] for a caller that already holds `Y⁺`.
pub fn projector_residual_with(y: &Matrix, y_pinv: &Matrix) -> Result<f64> {
    let p = y.matmul(y_pinv)?;
    let n = y.rows();
    let diff = p.0 - DMatrix::<f64>::identity(n, n);
    Ok(diff.norm_squared())
}
