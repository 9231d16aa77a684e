use super::{check_inegsqrt, find_correl_certificate, CheckConfig};
use crate::matcore::{eigh, inverse, psd_part, sqrt_psd, Mat, SymMat};
use crate::problem::MixtureProblem;
use crate::psdfeas::{default_candidates, solve, warm_start_from, Cone, FeasibilityStatus, FeasibilityTask};
use crate::scalar::{Scalar, Tolerances};
use crate::verdict::{Diagnostics, GammaWitness, Verdict, Witness};

const DUAL_ITERS: usize = 400;
const DUAL_REL: f64 = 1e-8;

/// Coupling covariances worth trying before the feasibility engine: the
/// canonical starts, the square-root coupling `Γ_ij = Σ_i^{1/2} Σ_j^{1/2}`,
/// the coupling of a correlation certificate, the positive part of
/// `B = (Σ - p1² Σ1 - p2² Σ2) / (2 p1 p2)` as off-diagonal block for two
/// components, and the user-supplied ones.
pub fn coupling_candidates<T: Scalar>(prob: &MixtureProblem<T>, cfg: &CheckConfig<T>) -> Vec<GammaWitness<T>> {
    let tol = Tolerances::<T>::default();
    let mut out = default_candidates(prob);
    let roots: Option<Vec<SymMat<T>>> = prob.covs().iter().map(|c| sqrt_psd(c, &tol).ok()).collect();
    if let Some(r) = roots {
        out.push(GammaWitness::from_blocks(prob.n(), prob.d(), |i, j| r[i].matmul(&r[j])));
    }
    let correl = find_correl_certificate(prob, cfg);
    if let Some(cert) = correl.correl() {
        if let Ok(m_inv) = inverse(&cert.m) {
            out.push(cert.gamma(prob.n(), &m_inv));
        }
    }
    if prob.n() == 2 {
        let (p1, p2) = (prob.weights()[0], prob.weights()[1]);
        let b = prob
            .target()
            .sub(&prob.covs()[0].scale(p1 * p1))
            .sub(&prob.covs()[1].scale(p2 * p2))
            .scale(T::one() / (T::c(2.0) * p1 * p2));
        let bp = psd_part(&b);
        out.push(GammaWitness::from_blocks(2, prob.d(), |i, j| {
            if i == j {
                prob.covs()[i].as_mat().clone()
            } else {
                bp.as_mat().clone()
            }
        }));
    }
    out.extend(cfg.extra_gammas.iter().cloned());
    out
}

/// Lower bound `⟨Y, Σ - p1² Σ1 - p2² Σ2⟩ - 2 p1 p2 |Σ2^{1/2} Y Σ1^{1/2}|_*`
/// on the infeasibility of the two-component coupling problem: a positive
/// value for some `Y ⪰ 0` rules out every coupling. Requires `n = 2`.
pub fn dual_gap<T: Scalar>(prob: &MixtureProblem<T>, y: &SymMat<T>) -> T {
    let parts = DualParts::new(prob);
    parts.value(y).0
}

struct DualParts<T> {
    g: SymMat<T>,
    l: SymMat<T>,
    r: SymMat<T>,
    c: T,
}

impl<T: Scalar> DualParts<T> {
    fn new(prob: &MixtureProblem<T>) -> Self {
        let tol = Tolerances::<T>::default();
        let (p1, p2) = (prob.weights()[0], prob.weights()[1]);
        let g = prob
            .target()
            .sub(&prob.covs()[0].scale(p1 * p1))
            .sub(&prob.covs()[1].scale(p2 * p2));
        let root = |m: &SymMat<T>| sqrt_psd(m, &tol).unwrap_or_else(|_| eigh(m).apply(|x| x.max(T::zero()).sqrt()));
        Self {
            g,
            l: root(&prob.covs()[0]),
            r: root(&prob.covs()[1]),
            c: T::c(2.0) * p1 * p2,
        }
    }

    /// Value and a supergradient.
    fn value(&self, y: &SymMat<T>) -> (T, SymMat<T>) {
        let d = y.dim();
        let x = self.r.matmul(y).matmul(&self.l);
        let e = eigh(&SymMat::symmetrize(&x.t_mul(&x)));
        let top = e.max().max(T::min_positive_value());
        let mut nuc = T::zero();
        let mut uv = Mat::zeros(d, d);
        for k in 0..d {
            let lam = e.eigenvalues[k].max(T::zero());
            let s = lam.sqrt();
            nuc = nuc + s;
            if lam <= T::c(1e-14) * top {
                continue;
            }
            let v = e.vector(k);
            let u: Vec<T> = x.mul_vec(&v).into_iter().map(|a| a / s).collect();
            for a in 0..d {
                for b in 0..d {
                    uv[(a, b)] = uv[(a, b)] + u[a] * v[b];
                }
            }
        }
        let inner: T = y.as_slice().iter().zip(self.g.as_slice()).map(|(a, b)| *a * *b).sum();
        let w = self.r.matmul(&uv).matmul(&self.l);
        let grad = self.g.sub(&SymMat::symmetrize(&w).scale(self.c));
        (inner - self.c * nuc, grad)
    }
}

/// Projection of a symmetric matrix onto `{Y ⪰ 0, tr Y = 1}`.
fn project_spectraplex<T: Scalar>(y: &SymMat<T>) -> SymMat<T> {
    let e = eigh(y);
    let mut sorted = e.eigenvalues.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut acc = T::zero();
    let mut shift = T::zero();
    for (k, v) in sorted.iter().enumerate() {
        acc = acc + *v;
        let t = (acc - T::one()) / T::c((k + 1) as f64);
        if *v - t > T::zero() {
            shift = t;
        }
    }
    e.apply(|l| (l - shift).max(T::zero()))
}

fn rank_one<T: Scalar>(v: &[T]) -> SymMat<T> {
    SymMat::from_upper(v.len(), |i, j| v[i] * v[j])
}

/// Projected supergradient ascent of the dual bound over the spectraplex.
fn refute<T: Scalar>(prob: &MixtureProblem<T>, hints: &[SymMat<T>]) -> Option<(SymMat<T>, T)> {
    let d = prob.d();
    let parts = DualParts::new(prob);
    let scale = prob.scale();
    let mut starts = vec![SymMat::identity(d).scale(T::one() / T::c(d as f64))];
    for h in hints.iter().chain(std::iter::once(&parts.g)) {
        let e = eigh(h);
        starts.extend((0..d).map(|k| rank_one(&e.vector(k))));
    }
    let mut best: Option<(SymMat<T>, T)> = None;
    for s in starts {
        let mut y = s;
        for k in 1..=DUAL_ITERS {
            let (v, g) = parts.value(&y);
            if best.as_ref().is_none_or(|b| v > b.1) {
                best = Some((y.clone(), v));
            }
            let step = T::one() / (scale * T::c(k as f64).sqrt());
            y = project_spectraplex(&y.add(&g.scale(step)));
        }
    }
    best.filter(|b| b.1 > T::c(DUAL_REL) * scale)
}

fn validated<T: Scalar>(
    prob: &MixtureProblem<T>,
    cands: &[GammaWitness<T>],
    cone: Cone,
    eps: T,
) -> Option<(GammaWitness<T>, T)> {
    cands
        .iter()
        .filter(|g| g.n() == prob.n() && g.d() == prob.d())
        .filter_map(|g| {
            let mut g = g.clone();
            g.enforce_diagonal(prob.covs());
            let chk = match cone {
                Cone::FullPsd => g.validate(prob, eps),
                Cone::PairwisePsd => g.validate_pairwise(prob, eps),
            };
            chk.valid.then_some((g, chk.dominance_lambda_min))
        })
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
}

fn check_coupling<T: Scalar>(prob: &MixtureProblem<T>, cfg: &CheckConfig<T>, cone: Cone) -> Verdict<T> {
    let sq = check_inegsqrt(prob, cfg);
    if sq.is_fails() {
        let mut v = sq;
        v.diagnostics.note("the square-root inequality fails, which rules out every coupling");
        return v;
    }
    let mut diag = Diagnostics::default();
    let cands = coupling_candidates(prob, cfg);
    if let Some((g, m)) = validated(prob, &cands, cone, cfg.eps_psd) {
        diag.note("closed-form candidate");
        return Verdict::holds(m).with_witness(Witness::Gamma(g)).with_diagnostics(diag);
    }
    let start = warm_start_from(prob, &cands, cone);
    let out = solve(&FeasibilityTask { problem: prob, cone }, Some(&start), &cfg.feasibility);
    diag.iterations = out.iterations;
    diag.residual("cone_distance", out.cone_distance.f64());
    diag.residual("affine_distance", out.affine_distance.f64());
    let last = match out.status {
        FeasibilityStatus::Feasible(g) => {
            let m = g.validate(prob, cfg.eps_psd).dominance_lambda_min;
            return Verdict::holds(m).with_witness(Witness::Gamma(g)).with_diagnostics(diag);
        }
        FeasibilityStatus::MaxIterations { last, .. } => last,
    };
    if prob.n() == 2 {
        let short = prob.target().sub(&prob.a_gamma_at(last.gamma()));
        if let Some((y, gap)) = refute(prob, &[short]) {
            diag.note("dual matrix refutes every coupling");
            return Verdict::fails(-gap, Witness::Dual { y, gap }).with_diagnostics(diag);
        }
    }
    diag.note("feasibility search exhausted without a certificate either way");
    let m = eigh(&prob.a_gamma_at(last.gamma()).sub(prob.target())).min();
    Verdict::unknown(m).with_witness(Witness::Gamma(last)).with_diagnostics(diag)
}

/// Condition (3): some `Γ ⪰ 0` with `Γ_(ii) = Σ_i` and `Σ ⪯ AΓA^T`.
pub fn check_inecov<T: Scalar>(prob: &MixtureProblem<T>, cfg: &CheckConfig<T>) -> Verdict<T> {
    check_coupling(prob, cfg, Cone::FullPsd)
}

/// Pairwise relaxation of condition (3): every `2d × 2d` pair block of `Γ`
/// is PSD. Coincides with condition (3) for two components.
pub fn check_inecovf<T: Scalar>(prob: &MixtureProblem<T>, cfg: &CheckConfig<T>) -> Verdict<T> {
    if prob.n() == 2 {
        return check_inecov(prob, cfg);
    }
    check_coupling(prob, cfg, Cone::PairwisePsd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verdict::Status;

    fn example1() -> MixtureProblem<f64> {
        MixtureProblem::centered(
            vec![0.5, 0.5],
            vec![SymMat::identity(2).scale(4.0), SymMat::diag(&[4.0, 0.0])],
            SymMat::from_f64(&[&[2.0, 1.0], &[1.0, 1.0]]),
        )
        .unwrap()
    }

    fn example2(a: f64, b: f64) -> MixtureProblem<f64> {
        MixtureProblem::centered(
            vec![0.5, 0.5],
            vec![SymMat::diag(&[8.0, 4.0]), SymMat::diag(&[4.0, 8.0])],
            SymMat::from_f64(&[&[a, b], &[b, a]]),
        )
        .unwrap()
    }

    #[test]
    fn example1_holds_with_its_unique_coupling() {
        let v = check_inecov(&example1(), &CheckConfig::default());
        assert_eq!(v.status, Status::Holds, "{:?}", v.diagnostics);
        let g = v.gamma().unwrap();
        let theta = g.block(0, 1);
        assert!((theta[(1, 0)] - 4.0).abs() < 1e-5, "{theta:?}");
        assert!(theta[(0, 0)].abs() < 1e-5 && theta[(0, 1)].abs() < 1e-5 && theta[(1, 1)].abs() < 1e-5);
    }

    #[test]
    fn dual_refutes_outside_region() {
        let prob = example2(6.0, 0.0);
        let v = check_inecov(&prob, &CheckConfig::default());
        assert_eq!(v.status, Status::Fails);
        let y = SymMat::diag(&[1.0, 0.0]);
        assert!(dual_gap(&prob, &y) > 0.0);
    }

    #[test]
    fn spectraplex_projection() {
        let y = project_spectraplex(&SymMat::<f64>::diag(&[3.0, -1.0, 0.5]));
        assert_eq!(y.diagonal(), vec![1.0, 0.0, 0.0]);
        let y = project_spectraplex(&SymMat::<f64>::diag(&[0.2, 0.2]));
        assert!((y.trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dual_bound_is_nonpositive_when_feasible() {
        let prob = example2(5.0, 0.0);
        for t in 0..20 {
            let th = t as f64 * 0.157;
            let y = rank_one(&[th.cos(), th.sin()]);
            assert!(dual_gap(&prob, &y) <= 1e-12);
        }
    }
}
