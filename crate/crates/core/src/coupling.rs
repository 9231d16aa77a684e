//! Gaussian couplings and the martingale kernel carrying `N(0, Σ)` onto the mixture.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matcore::{cholesky_lower, eigh, is_psd, pinv_psd, pinv_sqrt_psd, psd_part, sqrt_psd, Mat, SymMat};
use crate::problem::MixtureProblem;
use crate::rng::CounterRng;
use crate::scalar::{Scalar, Tolerances};
use crate::verdict::GammaWitness;

/// One joint draw: `x ~ N(0, Σ)`, the selected component `i` and `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSample<T> {
    pub x: Vec<T>,
    pub component: usize,
    pub y: Vec<T>,
}

/// Markov kernel `P(x, dy)`:
/// `z ~ N(x, AΓA^T - Σ)`, `w ~ N(0, Γ) | Aw = z`, `i ~ p`, `y = w_(i) + x_i`.
#[derive(Debug, Clone)]
pub struct MartingaleKernel<T> {
    problem: MixtureProblem<T>,
    gamma: GammaWitness<T>,
    mean_map: Mat<T>,
    cond_cov: SymMat<T>,
    cond_root: SymMat<T>,
    residual_cov: SymMat<T>,
    residual_root: SymMat<T>,
    target_root: SymMat<T>,
}

impl<T: Scalar> MartingaleKernel<T> {
    /// Precomputes the conditioning matrices; conditioning on `Aw = z` uses the
    /// pseudo-inverse of `AΓA^T`.
    pub fn build(prob: &MixtureProblem<T>, gamma: &GammaWitness<T>) -> Result<Self> {
        if !prob.is_centered() {
            return Err(Error::NonCenteredMeans);
        }
        let tol = Tolerances::<T>::default();
        let chk = gamma.validate(prob, tol.eps_psd);
        if !chk.valid {
            return Err(Error::InvalidGamma(format!(
                "block residual {:e}, lambda_min(Gamma) {:e}, lambda_min(AGA^T - Sigma) {:e}",
                chk.block_residual.f64(),
                chk.cone_lambda_min.f64(),
                chk.dominance_lambda_min.f64()
            )));
        }
        let g = gamma.gamma().as_mat();
        let a = prob.a_matrix();
        let ag = a.matmul(g);
        let v = SymMat::symmetrize(&ag.mul_t(&a));
        let vp = pinv_psd(&psd_part(&v), &tol)?;
        let mean_map = ag.transpose().matmul(&vp);
        let cond_cov = SymMat::symmetrize(&(g - &mean_map.matmul(&ag)));
        let cchk = is_psd(&cond_cov, T::c(10.0) * tol.eps_psd)?;
        if !cchk.is_psd {
            return Err(Error::InvalidGamma(format!(
                "conditional covariance has lambda_min {:e}",
                cchk.lambda_min.f64()
            )));
        }
        let residual_cov = v.sub(prob.target());
        let cond_root = sqrt_psd(&psd_part(&cond_cov), &tol)?;
        let residual_root = sqrt_psd(&psd_part(&residual_cov), &tol)?;
        let target_root = sqrt_psd(prob.target(), &tol)?;
        Ok(Self {
            problem: prob.clone(),
            gamma: gamma.clone(),
            mean_map,
            cond_cov,
            cond_root,
            residual_cov,
            residual_root,
            target_root,
        })
    }

    pub fn problem(&self) -> &MixtureProblem<T> {
        &self.problem
    }

    pub fn gamma(&self) -> &GammaWitness<T> {
        &self.gamma
    }

    /// `ΓA^T (AΓA^T)^+`, an `nd × d` matrix.
    pub fn mean_map(&self) -> &Mat<T> {
        &self.mean_map
    }

    pub fn conditional_cov(&self) -> &SymMat<T> {
        &self.cond_cov
    }

    pub fn residual_cov(&self) -> &SymMat<T> {
        &self.residual_cov
    }

    fn gaussian(root: &SymMat<T>, rng: &mut CounterRng) -> Vec<T> {
        let g: Vec<T> = (0..root.dim()).map(|_| T::c(rng.normal())).collect();
        root.mul_vec(&g)
    }

    /// Draws `y ~ P(x, ·)`.
    pub fn sample(&self, x: &[T], rng: &mut CounterRng) -> CouplingSample<T> {
        let d = self.problem.d();
        let noise = Self::gaussian(&self.residual_root, rng);
        let z: Vec<T> = x.iter().zip(&noise).map(|(a, b)| *a + *b).collect();
        let mean = self.mean_map.mul_vec(&z);
        let spread = Self::gaussian(&self.cond_root, rng);
        let weights: Vec<f64> = self.problem.weights().iter().map(|w| w.f64()).collect();
        let i = rng.categorical(&weights);
        let xi = &self.problem.means()[i];
        let y = (0..d).map(|k| mean[i * d + k] + spread[i * d + k] + xi[k]).collect();
        CouplingSample {
            x: x.to_vec(),
            component: i,
            y,
        }
    }

    /// Joint draws `(x, y)` with `x ~ N(0, Σ)`. Draw `k` uses stream `k` of `seed`,
    /// so the batch does not depend on how rayon schedules it.
    pub fn sample_batch(&self, count: usize, seed: u64) -> Vec<CouplingSample<T>> {
        (0..count)
            .into_par_iter()
            .map(|k| {
                let mut rng = CounterRng::stream(seed, k as u64);
                let x = Self::gaussian(&self.target_root, &mut rng);
                self.sample(&x, &mut rng)
            })
            .collect()
    }

    /// Draws `y` for a fixed `x`; draw `k` uses stream `k` of `seed`.
    pub fn sample_at(&self, x: &[T], count: usize, seed: u64) -> Vec<CouplingSample<T>> {
        (0..count)
            .into_par_iter()
            .map(|k| {
                let mut rng = CounterRng::stream(seed, k as u64);
                self.sample(x, &mut rng)
            })
            .collect()
    }
}

fn is_singular<T: Scalar>(a: &SymMat<T>, tol: &Tolerances<T>) -> bool {
    let e = eigh(a);
    e.min() <= tol.rank_tol * e.max().max(T::zero()) || e.max() <= T::zero()
}

/// Blocks `(S1, S2)` of the quadratic Wasserstein optimal coupling:
/// `S1 = Σ1^{1/2}`, `S2 = Σ1^{-1/2} (Σ1^{1/2} Σ2 Σ1^{1/2})^{1/2}`, so that
/// `[[Σ1, S1 S2^T], [S2 S1^T, Σ2]]` has a vanishing Schur complement.
/// Roles are swapped when `Σ1` is singular.
pub fn wasserstein_blocks<T: Scalar>(s1: &SymMat<T>, s2: &SymMat<T>) -> Result<(Mat<T>, Mat<T>)> {
    if s1.dim() != s2.dim() {
        return Err(Error::DimensionMismatch("covariances differ in dimension".into()));
    }
    let tol = Tolerances::<T>::default();
    let build = |a: &SymMat<T>, b: &SymMat<T>| -> Result<(Mat<T>, Mat<T>)> {
        let ra = sqrt_psd(a, &tol)?;
        let ra_inv = pinv_sqrt_psd(a, &tol)?;
        let inner = sqrt_psd(&b.congruence(&ra), &tol)?;
        Ok((ra.into_mat(), ra_inv.matmul(&inner)))
    };
    if !is_singular(s1, &tol) {
        build(s1, s2)
    } else if !is_singular(s2, &tol) {
        let (t1, t2) = build(s2, s1)?;
        Ok((t2, t1))
    } else {
        Err(Error::BothSingular)
    }
}

/// Lower Cholesky factors `(L1, L2)` of the Knothe rearrangement coupling.
pub fn knothe_blocks<T: Scalar>(s1: &SymMat<T>, s2: &SymMat<T>) -> Result<(Mat<T>, Mat<T>)> {
    let tol = Tolerances::<T>::default();
    Ok((cholesky_lower(s1, &tol)?, cholesky_lower(s2, &tol)?))
}

/// `Γ` built from two factor blocks: `[[Σ1, F1 F2^T], [F2 F1^T, Σ2]]`.
pub fn gamma_from_factors<T: Scalar>(prob: &MixtureProblem<T>, f1: &Mat<T>, f2: &Mat<T>) -> GammaWitness<T> {
    let d = prob.d();
    let theta = f1.mul_t(f2);
    GammaWitness::from_blocks(2, d, |i, j| match (i, j) {
        (0, 0) => prob.covs()[0].as_mat().clone(),
        (1, 1) => prob.covs()[1].as_mat().clone(),
        _ => theta.clone(),
    })
}
