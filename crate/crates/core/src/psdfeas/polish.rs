//! Levenberg-Marquardt refinement on factored iterates.
//!
//! Writes `Γ = F F^T` (`F` is `nd × r`) and `S = C C^T` (`C` is `d × s`) and
//! drives the quadratic residuals `(F F^T)_(ii) - Σ_i` and
//! `C C^T - (A F F^T A^T - Σ)` to zero. Near a boundary point, where
//! alternating projections slow down, this recovers the required accuracy.

use crate::matcore::{eigh, solve, Mat, SymMat};
use crate::problem::MixtureProblem;
use crate::scalar::Scalar;
use crate::verdict::GammaWitness;

const MAX_STEPS: usize = 60;

struct Layout {
    n: usize,
    d: usize,
    r: usize,
    s: usize,
}

impl Layout {
    fn unknowns(&self) -> usize {
        self.n * self.d * self.r + self.d * self.s
    }

    fn residuals(&self) -> usize {
        (self.n + 1) * self.d * (self.d + 1) / 2
    }

    fn f_idx(&self, row: usize, k: usize) -> usize {
        row * self.r + k
    }

    fn c_idx(&self, row: usize, k: usize) -> usize {
        self.n * self.d * self.r + row * self.s + k
    }
}

fn factor<T: Scalar>(m: &Mat<T>, rank: usize) -> Mat<T> {
    let e = eigh(&SymMat::symmetrize(m));
    let dim = m.rows();
    Mat::from_fn(dim, rank, |row, k| {
        let idx = dim - 1 - k;
        e.eigenvectors[(row, idx)] * e.eigenvalues[idx].max(T::zero()).sqrt()
    })
}

fn unpack<T: Scalar>(lay: &Layout, v: &[T]) -> (Mat<T>, Mat<T>) {
    let f = Mat::from_fn(lay.n * lay.d, lay.r, |a, k| v[lay.f_idx(a, k)]);
    let c = Mat::from_fn(lay.d, lay.s, |a, k| v[lay.c_idx(a, k)]);
    (f, c)
}

/// `G = A F`, a `d × r` matrix.
fn weighted<T: Scalar>(prob: &MixtureProblem<T>, f: &Mat<T>) -> Mat<T> {
    let d = prob.d();
    Mat::from_fn(d, f.cols(), |a, k| {
        prob.weights().iter().enumerate().map(|(i, w)| *w * f[(i * d + a, k)]).sum()
    })
}

fn residual<T: Scalar>(prob: &MixtureProblem<T>, lay: &Layout, v: &[T], inv_scale: T) -> Vec<T> {
    let (f, c) = unpack(lay, v);
    let d = lay.d;
    let mut out = Vec::with_capacity(lay.residuals());
    let ff = f.mul_t(&f);
    for i in 0..lay.n {
        for a in 0..d {
            for b in a..d {
                out.push((ff[(i * d + a, i * d + b)] - prob.covs()[i][(a, b)]) * inv_scale);
            }
        }
    }
    let g = weighted(prob, &f);
    let gg = g.mul_t(&g);
    let cc = c.mul_t(&c);
    for a in 0..d {
        for b in a..d {
            out.push((cc[(a, b)] - gg[(a, b)] + prob.target()[(a, b)]) * inv_scale);
        }
    }
    out
}

fn jacobian<T: Scalar>(prob: &MixtureProblem<T>, lay: &Layout, v: &[T], inv_scale: T) -> Mat<T> {
    let (f, c) = unpack(lay, v);
    let d = lay.d;
    let p = prob.weights();
    let g = weighted(prob, &f);
    let mut j = Mat::zeros(lay.residuals(), lay.unknowns());
    let mut row = 0;
    for i in 0..lay.n {
        for a in 0..d {
            for b in a..d {
                for k in 0..lay.r {
                    let ia = lay.f_idx(i * d + a, k);
                    let ib = lay.f_idx(i * d + b, k);
                    j[(row, ia)] = j[(row, ia)] + f[(i * d + b, k)] * inv_scale;
                    j[(row, ib)] = j[(row, ib)] + f[(i * d + a, k)] * inv_scale;
                }
                row += 1;
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            for k in 0..lay.s {
                let ia = lay.c_idx(a, k);
                let ib = lay.c_idx(b, k);
                j[(row, ia)] = j[(row, ia)] + c[(b, k)] * inv_scale;
                j[(row, ib)] = j[(row, ib)] + c[(a, k)] * inv_scale;
            }
            for (i, w) in p.iter().enumerate() {
                for k in 0..lay.r {
                    let ia = lay.f_idx(i * d + a, k);
                    let ib = lay.f_idx(i * d + b, k);
                    j[(row, ia)] = j[(row, ia)] - *w * g[(b, k)] * inv_scale;
                    j[(row, ib)] = j[(row, ib)] - *w * g[(a, k)] * inv_scale;
                }
            }
            row += 1;
        }
    }
    j
}

fn sq_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).sum()
}

/// Damped Gauss-Newton step `-(J^T J + μI)^{-1} J^T f`, or the minimum-norm
/// form `-J^T (J J^T + μI)^{-1} f` when there are fewer residuals than unknowns.
fn lm_step<T: Scalar>(j: &Mat<T>, f: &[T], mu: T) -> Option<Vec<T>> {
    let (m, k) = (j.rows(), j.cols());
    let fv = Mat::column(f);
    if m <= k {
        let mut jj = j.mul_t(j);
        for i in 0..m {
            jj[(i, i)] = jj[(i, i)] + mu;
        }
        let y = solve(&jj, &fv).ok()?;
        Some(j.t_mul(&y).as_slice().iter().map(|x| -*x).collect())
    } else {
        let mut jj = j.t_mul(j);
        for i in 0..k {
            jj[(i, i)] = jj[(i, i)] + mu;
        }
        let jf = j.t_mul(&fv);
        let y = solve(&jj, &jf).ok()?;
        Some(y.as_slice().iter().map(|x| -*x).collect())
    }
}

fn refine<T: Scalar>(prob: &MixtureProblem<T>, lay: &Layout, mut v: Vec<T>, scale: T) -> Option<Vec<T>> {
    let inv = T::one() / scale;
    let mut f = residual(prob, lay, &v, inv);
    let mut cost = sq_norm(&f);
    let mut mu = T::c(1e-3);
    let target = T::c(1e-26).max(T::epsilon() * T::epsilon() * T::c(16.0));
    for _ in 0..MAX_STEPS {
        if cost <= target {
            break;
        }
        let j = jacobian(prob, lay, &v, inv);
        let mut accepted = false;
        for _ in 0..12 {
            let Some(step) = lm_step(&j, &f, mu * (T::one() + cost.sqrt())) else {
                mu = mu * T::c(10.0);
                continue;
            };
            let cand: Vec<T> = v.iter().zip(&step).map(|(a, b)| *a + *b).collect();
            let fc = residual(prob, lay, &cand, inv);
            let cc = sq_norm(&fc);
            if cc.is_finite() && cc < cost {
                v = cand;
                f = fc;
                cost = cc;
                mu = (mu * T::c(0.3)).max(T::c(1e-15));
                accepted = true;
                break;
            }
            mu = mu * T::c(10.0);
        }
        if !accepted {
            break;
        }
    }
    cost.is_finite().then_some(v)
}

fn rank_at<T: Scalar>(eigs: &[T], rel: T, scale: T) -> usize {
    eigs.iter().filter(|l| **l > rel * scale).count()
}

/// Tries to turn the approximate pair `(Γ, S)` into a validated witness.
pub(super) fn polish<T: Scalar>(
    prob: &MixtureProblem<T>,
    gamma: &Mat<T>,
    slack: &Mat<T>,
    eps: T,
) -> Option<GammaWitness<T>> {
    let (n, d) = (prob.n(), prob.d());
    let scale = prob.scale();
    let eg = eigh(&SymMat::symmetrize(gamma)).eigenvalues;
    let es = eigh(&SymMat::symmetrize(slack)).eigenvalues;
    let mut pairs = Vec::new();
    for rel in [1e-2, 1e-3, 1e-4, 1e-6, 0.0] {
        let r = rank_at(&eg, T::c(rel), scale).max(1);
        let s = rank_at(&es, T::c(rel), scale);
        for cand in std::iter::once(s).chain(0..=d) {
            if !pairs.contains(&(r, cand)) {
                pairs.push((r, cand));
            }
        }
    }
    for (r, s) in pairs {
        let lay = Layout { n, d, r, s };
        if lay.unknowns() > 600 {
            continue;
        }
        let f0 = factor(gamma, r);
        let c0 = factor(slack, s);
        let mut v = vec![T::zero(); lay.unknowns()];
        for a in 0..n * d {
            for k in 0..r {
                v[lay.f_idx(a, k)] = f0[(a, k)];
            }
        }
        for a in 0..d {
            for k in 0..s {
                v[lay.c_idx(a, k)] = c0[(a, k)];
            }
        }
        let Some(v) = refine(prob, &lay, v, scale) else {
            continue;
        };
        let (f, _) = unpack(&lay, &v);
        let mut w = GammaWitness::new(n, d, SymMat::symmetrize(&f.mul_t(&f))).ok()?;
        w.enforce_diagonal(prob.covs());
        if w.validate(prob, eps).valid {
            return Some(w);
        }
    }
    None
}
