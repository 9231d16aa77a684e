use serde::Serialize;

use crate::error::{Error, Result};
use crate::matcore::{eigh, is_psd, norm, Mat, SymMat};
use crate::scalar::{Scalar, Tolerances};

/// Target covariance `Σ` and mixture `Σ_i p_i N(x_i, Σ_i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar + Serialize"))]
pub struct MixtureProblem<T> {
    p: Vec<T>,
    means: Vec<Vec<T>>,
    covs: Vec<SymMat<T>>,
    target: SymMat<T>,
}

fn weight_tol<T: Scalar>() -> T {
    T::c(1e-12).max(T::epsilon() * T::c(16.0))
}

impl<T: Scalar> MixtureProblem<T> {
    /// Validates weights, shapes and positive semi-definiteness.
    pub fn new(p: Vec<T>, means: Vec<Vec<T>>, covs: Vec<SymMat<T>>, target: SymMat<T>) -> Result<Self> {
        let n = p.len();
        let d = target.dim();
        if n < 2 {
            return Err(Error::InvalidProblem(format!("need at least two components, got {n}")));
        }
        if d == 0 {
            return Err(Error::InvalidProblem("dimension must be positive".into()));
        }
        if covs.len() != n || means.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} weights, {} covariances, {} means",
                n,
                covs.len(),
                means.len()
            )));
        }
        if p.iter().any(|w| !(*w > T::zero() && *w < T::one())) {
            return Err(Error::InvalidProblem("weights must lie in (0, 1)".into()));
        }
        let total: T = p.iter().copied().sum();
        if (total - T::one()).abs() > weight_tol() {
            return Err(Error::InvalidProblem(format!("weights sum to {}", total)));
        }
        for (i, (c, m)) in covs.iter().zip(&means).enumerate() {
            if c.dim() != d || m.len() != d {
                return Err(Error::DimensionMismatch(format!("component {i} does not have dimension {d}")));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidProblem(format!("component {i} has a non-finite mean")));
            }
        }
        let tol = Tolerances::<T>::default();
        for m in covs.iter().chain(std::iter::once(&target)) {
            let chk = is_psd(m, tol.eps_psd)?;
            if !chk.is_psd {
                return Err(Error::NotPsd {
                    lambda_min: chk.lambda_min.f64(),
                });
            }
        }
        Ok(Self {
            p,
            means,
            covs,
            target,
        })
    }

    /// Problem with all component means at the origin.
    pub fn centered(p: Vec<T>, covs: Vec<SymMat<T>>, target: SymMat<T>) -> Result<Self> {
        let d = target.dim();
        let means = vec![vec![T::zero(); d]; p.len()];
        Self::new(p, means, covs, target)
    }

    pub fn d(&self) -> usize {
        self.target.dim()
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.p
    }

    pub fn means(&self) -> &[Vec<T>] {
        &self.means
    }

    pub fn covs(&self) -> &[SymMat<T>] {
        &self.covs
    }

    pub fn target(&self) -> &SymMat<T> {
        &self.target
    }

    /// `Σ_i p_i x_i`.
    pub fn mean_barycenter(&self) -> Vec<T> {
        (0..self.d())
            .map(|k| self.p.iter().zip(&self.means).map(|(w, m)| *w * m[k]).sum())
            .collect()
    }

    /// Barycenter of the means vanishes within `1e-10`.
    pub fn is_centered(&self) -> bool {
        norm(&self.mean_barycenter()) <= T::c(1e-10).max(T::epsilon() * T::c(64.0))
    }

    pub fn all_means_zero(&self) -> bool {
        self.means.iter().flatten().all(|x| *x == T::zero())
    }

    /// `A = (p_1 I, ..., p_n I)`, a `d × nd` matrix.
    pub fn a_matrix(&self) -> Mat<T> {
        let d = self.d();
        Mat::from_fn(d, d * self.n(), |r, c| if c % d == r { self.p[c / d] } else { T::zero() })
    }

    /// `A Γ A^T = Σ_ij p_i p_j Γ_(ij)` for an `nd × nd` matrix.
    pub fn a_gamma_at(&self, gamma: &Mat<T>) -> SymMat<T> {
        let d = self.d();
        let n = self.n();
        let mut out = Mat::zeros(d, d);
        for i in 0..n {
            for j in 0..n {
                let w = self.p[i] * self.p[j];
                for r in 0..d {
                    for c in 0..d {
                        out[(r, c)] = out[(r, c)] + w * gamma[(i * d + r, j * d + c)];
                    }
                }
            }
        }
        SymMat::symmetrize(&out)
    }

    /// Largest spectral norm among `Σ` and the `Σ_i`, floored at the smallest positive normal.
    pub fn scale(&self) -> T {
        self.covs
            .iter()
            .chain(std::iter::once(&self.target))
            .map(|m| eigh(m).norm2())
            .fold(T::min_positive_value(), |a, b| a.max(b))
    }

    /// The problem seen through `x ↦ M x`: covariances `M Σ M^T`, means `M x_i`.
    pub fn transformed(&self, m: &Mat<T>) -> Result<Self> {
        if m.rows() != self.d() || m.cols() != self.d() {
            return Err(Error::DimensionMismatch("transform must be d × d".into()));
        }
        Ok(Self {
            p: self.p.clone(),
            means: self.means.iter().map(|x| m.mul_vec(x)).collect(),
            covs: self.covs.iter().map(|c| c.congruence(m)).collect(),
            target: self.target.congruence(m),
        })
    }

    pub fn with_target(&self, target: SymMat<T>) -> Result<Self> {
        Self::new(self.p.clone(), self.means.clone(), self.covs.clone(), target)
    }

    pub fn cast<U: Scalar>(&self) -> MixtureProblem<U> {
        MixtureProblem {
            p: self.p.iter().map(|x| U::c(x.f64())).collect(),
            means: self.means.iter().map(|m| m.iter().map(|x| U::c(x.f64())).collect()).collect(),
            covs: self.covs.iter().map(SymMat::cast).collect(),
            target: self.target.cast(),
        }
    }
}
