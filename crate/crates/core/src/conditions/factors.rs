use crate::error::{Error, Result};
use crate::matcore::{eigh, polar_factor, sqrt_psd, Mat};
use crate::problem::MixtureProblem;
use crate::scalar::{Scalar, Tolerances};
use crate::verdict::GammaWitness;

/// Orthogonal `O_i` (`q × q`) with `σ_i O_i = Θ_i`, where `σ_i = Σ_i^{1/2}`
/// padded to `d × q` and `Θ_i` are the rows of `Γ^{1/2}` belonging to block `i`.
#[derive(Debug, Clone)]
pub struct OrthogonalFactors<T> {
    pub o: Vec<Mat<T>>,
    /// `Σ_i p_i σ_i O_i`, a `d × q` matrix.
    pub combined: Mat<T>,
    /// `max_i |O_i O_i^T - I|_F`.
    pub orthogonality_residual: T,
    /// `max_i |σ_i O_i - Θ_i|_F`.
    pub factor_residual: T,
    /// `λ_min(combined combined^T - Σ)`.
    pub dominance_lambda_min: T,
    /// Dominance holds within `1e-7 (1 + |Σ|)`.
    pub valid: bool,
}

/// Reconstructs orthogonal factors from a coupling covariance `Γ` for `q ≥ nd`.
pub fn orthogonal_factors_from_gamma<T: Scalar>(
    prob: &MixtureProblem<T>,
    gamma: &GammaWitness<T>,
    q: usize,
) -> Result<OrthogonalFactors<T>> {
    let (n, d) = (prob.n(), prob.d());
    if gamma.n() != n || gamma.d() != d {
        return Err(Error::DimensionMismatch("Gamma does not match the problem".into()));
    }
    if q < n * d {
        return Err(Error::DimensionMismatch(format!("q = {q} is smaller than nd = {}", n * d)));
    }
    let tol = Tolerances::<T>::default();
    let root = sqrt_psd(gamma.gamma(), &tol)?;
    let mut o = Vec::with_capacity(n);
    let mut combined = Mat::zeros(d, q);
    let mut orth = T::zero();
    let mut fres = T::zero();
    for i in 0..n {
        let theta = root.block(i * d, 0, d, n * d).resized(d, q);
        let oi = polar_factor(&theta, &prob.covs()[i], &tol)?;
        let sigma = sqrt_psd(&prob.covs()[i], &tol)?.resized(d, q);
        let so = sigma.matmul(&oi);
        orth = orth.max((&oi.mul_t(&oi) - &Mat::identity(q)).frobenius());
        fres = fres.max((&so - &theta).frobenius());
        combined = &combined + &so.scale(prob.weights()[i]);
        o.push(oi);
    }
    let dom = crate::matcore::SymMat::symmetrize(&combined.mul_t(&combined)).sub(prob.target());
    let lm = eigh(&dom).min();
    let valid = lm >= -T::c(1e-7) * (T::one() + eigh(prob.target()).norm2());
    Ok(OrthogonalFactors {
        o,
        combined,
        orthogonality_residual: orth,
        factor_residual: fres,
        dominance_lambda_min: lm,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::SymMat;

    #[test]
    fn equal_components() {
        let s = SymMat::from_f64(&[&[2.0, 0.5], &[0.5, 1.0]]);
        let prob = MixtureProblem::centered(vec![0.4, 0.6], vec![s.clone(), s.clone()], s.clone()).unwrap();
        let g = GammaWitness::all_blocks(&prob, &s);
        let f = orthogonal_factors_from_gamma(&prob, &g, 4).unwrap();
        assert!(f.valid);
        assert!(f.orthogonality_residual < 1e-10);
        assert!(f.factor_residual < 1e-8);
        assert!(matches!(orthogonal_factors_from_gamma(&prob, &g, 3), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn example1_gamma() {
        let prob = MixtureProblem::centered(
            vec![0.5, 0.5],
            vec![SymMat::identity(2).scale(4.0), SymMat::diag(&[4.0, 0.0])],
            SymMat::from_f64(&[&[2.0, 1.0], &[1.0, 1.0]]),
        )
        .unwrap();
        let g = SymMat::from_f64(&[
            &[4.0, 0.0, 0.0, 0.0],
            &[0.0, 4.0, 4.0, 0.0],
            &[0.0, 4.0, 4.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
        ]);
        let f = orthogonal_factors_from_gamma(&prob, &GammaWitness::new(2, 2, g).unwrap(), 4).unwrap();
        assert!(f.valid, "{}", f.dominance_lambda_min);
        assert!(f.orthogonality_residual < 1e-8);
    }
}
