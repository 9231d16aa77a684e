//! Floating point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the numeric core is generic over (`f32` or `f64`).
///
/// The associated constants are the default relative tolerances used by the
/// matrix routines; they are looser for `f32` so the same algorithms stay
/// meaningful in single precision.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Default PSD tolerance, relative to matrix scale.
    const EPS_PSD: f64;
    /// Default pseudo-inverse rank cut-off, relative to the largest eigenvalue.
    const RANK_TOL: f64;
    /// Jacobi convergence threshold on the off-diagonal Frobenius norm.
    const JACOBI_TOL: f64;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const EPS_PSD: f64 = 1e-9;
    const RANK_TOL: f64 = 1e-10;
    const JACOBI_TOL: f64 = 1e-13;
}

impl Scalar for f32 {
    const EPS_PSD: f64 = 1e-5;
    const RANK_TOL: f64 = 1e-6;
    const JACOBI_TOL: f64 = 1e-6;
}

/// Tolerances shared by the matrix routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    /// Relative PSD slack: `A` is PSD when `lambda_min >= -eps_psd * (1 + |A|_2)`.
    pub eps_psd: T,
    /// Eigenvalues below `rank_tol * lambda_max` are treated as zero.
    pub rank_tol: T,
}

impl<T: Scalar> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            eps_psd: T::c(T::EPS_PSD),
            rank_tol: T::c(T::RANK_TOL),
        }
    }
}
