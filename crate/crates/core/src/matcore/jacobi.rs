//! Cyclic Jacobi eigen-solver for small dense symmetric matrices.

use crate::matcore::mat::Mat;
use crate::matcore::sym::SymMat;
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition `A = Q diag(eigenvalues) Q^T`, eigenvalues ascending,
/// eigenvectors stored as the columns of `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomp<T> {
    pub eigenvalues: Vec<T>,
    pub eigenvectors: Mat<T>,
}

impl<T: Scalar> SpectralDecomp<T> {
    pub fn min(&self) -> T {
        self.eigenvalues.first().copied().unwrap_or_else(T::zero)
    }

    pub fn max(&self) -> T {
        self.eigenvalues.last().copied().unwrap_or_else(T::zero)
    }

    /// Spectral norm `max |lambda|`.
    pub fn norm2(&self) -> T {
        self.min().abs().max(self.max().abs())
    }

    pub fn vector(&self, k: usize) -> Vec<T> {
        self.eigenvectors.col_vec(k)
    }

    /// `Q diag(f(lambda)) Q^T`.
    pub fn apply(&self, f: impl Fn(T) -> T) -> SymMat<T> {
        let n = self.eigenvalues.len();
        let q = &self.eigenvectors;
        let fl: Vec<T> = self.eigenvalues.iter().map(|l| f(*l)).collect();
        SymMat::from_upper(n, |i, j| (0..n).map(|k| q[(i, k)] * fl[k] * q[(j, k)]).sum())
    }

    pub fn reconstruct(&self) -> SymMat<T> {
        self.apply(|l| l)
    }
}

/// Diagonalizes `a` by cyclic Jacobi rotations. Iterates until the
/// off-diagonal Frobenius norm is below `T::JACOBI_TOL * |A|_F`.
pub fn eigh<T: Scalar>(a: &SymMat<T>) -> SpectralDecomp<T> {
    let n = a.dim();
    let mut m = a.as_mat().clone();
    let mut v = Mat::<T>::identity(n);
    let scale = a.frobenius();
    let target = T::c(T::JACOBI_TOL) * scale;

    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&m);
        if off <= target || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                rotate(&mut m, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let eigenvectors = Mat::from_fn(n, n, |r, c| v[(r, order[c])]);
    SpectralDecomp {
        eigenvalues,
        eigenvectors,
    }
}

fn off_diagonal_norm<T: Scalar>(m: &Mat<T>) -> T {
    let n = m.rows();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s = s + m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn rotate<T: Scalar>(m: &mut Mat<T>, v: &mut Mat<T>, p: usize, q: usize) {
    let n = m.rows();
    let apq = m[(p, q)];
    let theta = (m[(q, q)] - m[(p, p)]) / (T::c(2.0) * apq);
    let t = if theta.abs() > T::c(1e100) {
        T::one() / (T::c(2.0) * theta)
    } else {
        let sgn = if theta >= T::zero() { T::one() } else { -T::one() };
        sgn / (theta.abs() + (theta * theta + T::one()).sqrt())
    };
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;

    m[(p, p)] = m[(p, p)] - t * apq;
    m[(q, q)] = m[(q, q)] + t * apq;
    m[(p, q)] = T::zero();
    m[(q, p)] = T::zero();
    for r in 0..n {
        if r != p && r != q {
            let g = m[(r, p)];
            let h = m[(r, q)];
            let rp = c * g - s * h;
            let rq = s * g + c * h;
            m[(r, p)] = rp;
            m[(p, r)] = rp;
            m[(r, q)] = rq;
            m[(q, r)] = rq;
        }
    }
    for r in 0..n {
        let g = v[(r, p)];
        let h = v[(r, q)];
        v[(r, p)] = c * g - s * h;
        v[(r, q)] = s * g + c * h;
    }
}
