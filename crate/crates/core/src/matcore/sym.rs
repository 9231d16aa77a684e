use std::ops::Deref;

use crate::error::{Error, Result};
use crate::matcore::mat::Mat;
use crate::scalar::Scalar;

/// Square matrix whose storage is exactly symmetric.
///
/// Every constructor mirrors or averages so that `a[(i, j)] == a[(j, i)]`
/// holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat<T>(Mat<T>);

impl<T: Scalar> SymMat<T> {
    pub fn zeros(dim: usize) -> Self {
        Self(Mat::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Mat::identity(dim))
    }

    pub fn diag(values: &[T]) -> Self {
        Self(Mat::diag(values))
    }

    /// Builds from `f(i, j)` evaluated on the upper triangle only.
    pub fn from_upper(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Mat::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self(m)
    }

    /// Symmetric part `(m + m^T) / 2`.
    pub fn symmetrize(m: &Mat<T>) -> Self {
        assert!(m.is_square(), "symmetrize needs a square matrix");
        let half = T::c(0.5);
        Self::from_upper(m.rows(), |i, j| if i == j { m[(i, i)] } else { (m[(i, j)] + m[(j, i)]) * half })
    }

    /// Accepts `m` if it is symmetric within `tol` (absolute); mirrors the upper triangle.
    pub fn from_mat(m: &Mat<T>, tol: T) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "expected square matrix, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        if !m.is_finite() {
            return Err(Error::InvalidMatrix("non-finite entries".into()));
        }
        let asym = m.asymmetry();
        if asym > tol {
            return Err(Error::InvalidMatrix(format!("asymmetry {:e} exceeds tolerance", asym.f64())));
        }
        Ok(Self::from_upper(m.rows(), |i, j| m[(i, j)]))
    }

    pub fn from_f64(rows: &[&[f64]]) -> Self {
        Self::symmetrize(&Mat::from_f64(rows))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn as_mat(&self) -> &Mat<T> {
        &self.0
    }

    pub fn into_mat(self) -> Mat<T> {
        self.0
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.0[(i, j)] = v;
        self.0[(j, i)] = v;
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn scale(&self, s: T) -> Self {
        Self(self.0.scale(s))
    }

    /// `M self M^T`, symmetrized to absorb rounding.
    pub fn congruence(&self, m: &Mat<T>) -> Self {
        Self::symmetrize(&m.matmul(&self.0).mul_t(m))
    }

    /// Principal submatrix on rows/cols `start..start + len`.
    pub fn principal_block(&self, start: usize, len: usize) -> Self {
        Self(self.0.block(start, start, len, len))
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    pub fn cast<U: Scalar>(&self) -> SymMat<U> {
        SymMat(self.0.cast())
    }
}

impl<T> Deref for SymMat<T> {
    type Target = Mat<T>;
    fn deref(&self) -> &Mat<T> {
        &self.0
    }
}
