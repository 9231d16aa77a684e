use crate::error::{Error, Result};
use crate::matcore::jacobi::{eigh, SpectralDecomp};
use crate::matcore::mat::{dot, Mat};
use crate::matcore::sym::SymMat;
use crate::scalar::{Scalar, Tolerances};

/// Result of a PSD test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdCheck<T> {
    pub is_psd: bool,
    pub lambda_min: T,
}

/// Unit-diagonal correlation matrix together with the scales it was extracted with.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationOf<T> {
    pub corr: SymMat<T>,
    /// `sqrt(A_kk)`, zero on degenerate diagonal entries.
    pub scales: Vec<T>,
    /// `true` where `A_kk` was treated as zero.
    pub degenerate: Vec<bool>,
}

fn ensure_finite<T: Scalar>(a: &Mat<T>) -> Result<()> {
    if a.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidMatrix("non-finite entries".into()))
    }
}

/// PSD slack used throughout: `eps * (1 + |A|_2)`.
pub fn psd_slack<T: Scalar>(norm2: T, eps: T) -> T {
    eps * (T::one() + norm2)
}

/// `lambda_min(A) >= -eps (1 + |A|_2)`; always reports `lambda_min`.
pub fn is_psd<T: Scalar>(a: &SymMat<T>, eps: T) -> Result<PsdCheck<T>> {
    ensure_finite(a)?;
    let e = eigh(a);
    Ok(PsdCheck {
        is_psd: e.min() >= -psd_slack(e.norm2(), eps),
        lambda_min: e.min(),
    })
}

fn require_psd<T: Scalar>(e: &SpectralDecomp<T>, eps: T) -> Result<()> {
    if e.min() < -psd_slack(e.norm2(), eps) {
        Err(Error::NotPsd {
            lambda_min: e.min().f64(),
        })
    } else {
        Ok(())
    }
}

/// Principal square root; eigenvalues inside the PSD slack are clamped to zero.
pub fn sqrt_psd<T: Scalar>(a: &SymMat<T>, tol: &Tolerances<T>) -> Result<SymMat<T>> {
    ensure_finite(a)?;
    let e = eigh(a);
    require_psd(&e, tol.eps_psd)?;
    Ok(e.apply(|l| l.max(T::zero()).sqrt()))
}

/// Moore-Penrose pseudo-inverse of a PSD matrix.
pub fn pinv_psd<T: Scalar>(a: &SymMat<T>, tol: &Tolerances<T>) -> Result<SymMat<T>> {
    ensure_finite(a)?;
    let e = eigh(a);
    require_psd(&e, tol.eps_psd)?;
    let cut = tol.rank_tol * e.max().max(T::zero());
    Ok(e.apply(|l| if l > cut && l > T::zero() { T::one() / l } else { T::zero() }))
}

/// Pseudo-inverse square root `(A^+)^{1/2}` of a PSD matrix.
pub fn pinv_sqrt_psd<T: Scalar>(a: &SymMat<T>, tol: &Tolerances<T>) -> Result<SymMat<T>> {
    ensure_finite(a)?;
    let e = eigh(a);
    require_psd(&e, tol.eps_psd)?;
    let cut = tol.rank_tol * e.max().max(T::zero());
    Ok(e.apply(|l| if l > cut && l > T::zero() { T::one() / l.sqrt() } else { T::zero() }))
}

/// Projection onto the PSD cone (negative eigenvalues clamped to zero).
pub fn psd_part<T: Scalar>(a: &SymMat<T>) -> SymMat<T> {
    eigh(a).apply(|l| l.max(T::zero()))
}

/// Correlation matrix associated with a PSD matrix.
///
/// Diagonal entries at or below `eps_psd * max_k A_kk` are degenerate: their
/// row and column become the corresponding identity row.
pub fn correlation_of<T: Scalar>(a: &SymMat<T>, tol: &Tolerances<T>) -> Result<CorrelationOf<T>> {
    ensure_finite(a)?;
    let e = eigh(a);
    require_psd(&e, tol.eps_psd)?;
    let d = a.dim();
    let diag = a.diagonal();
    let dmax = diag.iter().fold(T::zero(), |m, x| m.max(*x));
    let cut = tol.eps_psd * dmax;
    let degenerate: Vec<bool> = diag.iter().map(|x| *x <= cut).collect();
    let scales: Vec<T> = diag
        .iter()
        .zip(&degenerate)
        .map(|(x, deg)| if *deg { x.max(T::zero()).sqrt() } else { x.sqrt() })
        .collect();
    let corr = SymMat::from_upper(d, |k, l| {
        if k == l {
            T::one()
        } else if degenerate[k] || degenerate[l] {
            T::zero()
        } else {
            let c = a[(k, l)] / (scales[k] * scales[l]);
            c.max(-T::one()).min(T::one())
        }
    });
    Ok(CorrelationOf {
        corr,
        scales,
        degenerate,
    })
}

/// `S1 - Theta S2^+ Theta^T`, requiring `range(Theta^T) ⊆ range(S2)`.
pub fn schur_complement<T: Scalar>(
    s1: &SymMat<T>,
    theta: &Mat<T>,
    s2: &SymMat<T>,
    tol: &Tolerances<T>,
) -> Result<SymMat<T>> {
    if theta.rows() != s1.dim() || theta.cols() != s2.dim() {
        return Err(Error::DimensionMismatch(format!(
            "Theta is {}x{}, blocks are {} and {}",
            theta.rows(),
            theta.cols(),
            s1.dim(),
            s2.dim()
        )));
    }
    let p = pinv_psd(s2, tol)?;
    let tt = theta.transpose();
    let proj = s2.matmul(&p).matmul(&tt);
    let residual = (&proj - &tt).frobenius();
    let scale = T::one() + theta.frobenius();
    if residual > T::c(10.0) * tol.eps_psd * scale {
        return Err(Error::RangeViolation {
            residual: residual.f64(),
        });
    }
    let prod = theta.matmul(&p).matmul(&tt);
    Ok(SymMat::symmetrize(&(s1.as_mat() - &prod)))
}

/// Orthogonal `O` (q×q) with `Sigma^{1/2} O[0..d, :] = Theta` for `Theta` (d×q)
/// satisfying `Theta Theta^T = Sigma`. Rows acting on the kernel of `Sigma`
/// and the remaining `q - d` rows are completed by Gram-Schmidt.
pub fn polar_factor<T: Scalar>(theta: &Mat<T>, sigma: &SymMat<T>, tol: &Tolerances<T>) -> Result<Mat<T>> {
    let d = sigma.dim();
    let q = theta.cols();
    if theta.rows() != d || q < d {
        return Err(Error::DimensionMismatch(format!(
            "Theta is {}x{}, Sigma is {}x{}",
            theta.rows(),
            q,
            d,
            d
        )));
    }
    let gram = theta.mul_t(theta);
    let residual = (&gram - sigma.as_mat()).frobenius();
    if residual > T::c(10.0) * tol.eps_psd * (T::one() + sigma.frobenius()) {
        return Err(Error::FactorMismatch {
            residual: residual.f64(),
        });
    }
    let e = eigh(sigma);
    let cut = tol.rank_tol * e.max().max(T::zero());
    let u = &e.eigenvectors;

    // rows of R in the eigenbasis: range directions first, then kernel fill-ins
    let mut r_rows: Vec<Option<Vec<T>>> = vec![None; d];
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(q);
    for k in (0..d).rev() {
        let lam = e.eigenvalues[k];
        if lam > cut && lam > T::zero() {
            let uk = e.vector(k);
            let s = lam.sqrt();
            let row: Vec<T> = (0..q).map(|c| (0..d).map(|r| uk[r] * theta[(r, c)]).sum::<T>() / s).collect();
            let row = orthonormalize(&row, &basis).unwrap_or(row);
            basis.push(row.clone());
            r_rows[k] = Some(row);
        }
    }
    let mut fallback = 0;
    for k in 0..d {
        if r_rows[k].is_some() {
            continue;
        }
        let mut cand: Vec<T> = (0..q).map(|c| if c < d { u[(c, k)] } else { T::zero() }).collect();
        let mut row = orthonormalize(&cand, &basis);
        while row.is_none() {
            cand = unit(q, fallback);
            fallback += 1;
            row = orthonormalize(&cand, &basis);
        }
        let row = row.expect("completion exists");
        basis.push(row.clone());
        r_rows[k] = Some(row);
    }
    let r = Mat::from_fn(d, q, |k, c| r_rows[k].as_ref().expect("filled")[c]);
    let w = u.matmul(&r);

    let mut out: Vec<Vec<T>> = w.to_rows();
    let mut ortho = out.clone();
    let mut j = 0;
    while out.len() < q {
        if let Some(row) = orthonormalize(&unit(q, j), &ortho) {
            ortho.push(row.clone());
            out.push(row);
        }
        j += 1;
    }
    Mat::from_rows(&out)
}

fn unit<T: Scalar>(n: usize, k: usize) -> Vec<T> {
    (0..n).map(|i| if i == k { T::one() } else { T::zero() }).collect()
}

/// Gram-Schmidt step (applied twice); `None` when `v` is numerically in the span.
fn orthonormalize<T: Scalar>(v: &[T], basis: &[Vec<T>]) -> Option<Vec<T>> {
    let mut w = v.to_vec();
    let n0 = dot(v, v).sqrt();
    for _ in 0..2 {
        for b in basis {
            let c = dot(&w, b);
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi = *wi - c * *bi;
            }
        }
    }
    let n = dot(&w, &w).sqrt();
    if n <= T::c(1e-6) * n0.max(T::c(1e-300)) || n == T::zero() {
        return None;
    }
    Some(w.into_iter().map(|x| x / n).collect())
}

/// Lower Cholesky factor of a PSD matrix; columns at rank deficiencies are zero.
pub fn cholesky_lower<T: Scalar>(a: &SymMat<T>, tol: &Tolerances<T>) -> Result<Mat<T>> {
    ensure_finite(a)?;
    let n = a.dim();
    let scale = a.diagonal().iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let slack = tol.eps_psd * (T::one() + scale);
    let mut l = Mat::<T>::zeros(n, n);
    for j in 0..n {
        let s = a[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<T>();
        if s < -slack {
            return Err(Error::NotPsd { lambda_min: s.f64() });
        }
        if s <= slack {
            for i in j + 1..n {
                let v = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<T>();
                let bound = (slack * (T::one() + a[(i, i)].abs())).sqrt();
                if v.abs() > bound {
                    return Err(Error::NotPsd { lambda_min: -v.abs().f64() });
                }
            }
            continue;
        }
        let ljj = s.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let v = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<T>();
            l[(i, j)] = v / ljj;
        }
    }
    Ok(l)
}

/// Largest singular value over smallest, via the spectrum of `M^T M`.
pub fn condition_number<T: Scalar>(m: &Mat<T>) -> T {
    let e = eigh(&SymMat::symmetrize(&m.t_mul(m)));
    let lo = e.min().max(T::zero()).sqrt();
    let hi = e.max().max(T::zero()).sqrt();
    if lo == T::zero() {
        T::infinity()
    } else {
        hi / lo
    }
}

/// Solves `A x = b` for square `A` by Gaussian elimination with partial pivoting.
pub fn solve<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Result<Mat<T>> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n {
        return Err(Error::DimensionMismatch("solve".into()));
    }
    let m = b.cols();
    let mut aa = a.clone();
    let mut bb = b.clone();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| aa[(i, col)].abs().partial_cmp(&aa[(j, col)].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .expect("non-empty");
        if aa[(piv, col)] == T::zero() {
            return Err(Error::InvalidMatrix("singular system".into()));
        }
        if piv != col {
            for c in 0..n {
                let t = aa[(col, c)];
                aa[(col, c)] = aa[(piv, c)];
                aa[(piv, c)] = t;
            }
            for c in 0..m {
                let t = bb[(col, c)];
                bb[(col, c)] = bb[(piv, c)];
                bb[(piv, c)] = t;
            }
        }
        let p = aa[(col, col)];
        for r in col + 1..n {
            let f = aa[(r, col)] / p;
            if f == T::zero() {
                continue;
            }
            for c in col..n {
                aa[(r, c)] = aa[(r, c)] - f * aa[(col, c)];
            }
            for c in 0..m {
                bb[(r, c)] = bb[(r, c)] - f * bb[(col, c)];
            }
        }
    }
    let mut x = Mat::<T>::zeros(n, m);
    for c in 0..m {
        for r in (0..n).rev() {
            let s: T = (r + 1..n).map(|k| aa[(r, k)] * x[(k, c)]).sum();
            x[(r, c)] = (bb[(r, c)] - s) / aa[(r, r)];
        }
    }
    Ok(x)
}

pub fn inverse<T: Scalar>(a: &Mat<T>) -> Result<Mat<T>> {
    solve(a, &Mat::identity(a.rows()))
}
