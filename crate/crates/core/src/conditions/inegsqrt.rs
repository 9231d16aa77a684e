use rayon::prelude::*;

use super::CheckConfig;
use crate::matcore::{eigh, norm, SymMat};
use crate::problem::MixtureProblem;
use crate::rng::CounterRng;
use crate::scalar::Scalar;
use crate::search::{golden_section, grid_then_golden};
use crate::verdict::{Diagnostics, Status, Verdict, Witness};

/// `h(ξ) = Σ_i p_i sqrt(ξ^T Σ_i ξ) - sqrt(ξ^T Σ ξ)`.
pub fn sqrt_gap<T: Scalar>(prob: &MixtureProblem<T>, xi: &[T]) -> T {
    let mix: T = prob
        .weights()
        .iter()
        .zip(prob.covs())
        .map(|(p, c)| *p * c.quad_form(xi).max(T::zero()).sqrt())
        .sum();
    mix - prob.target().quad_form(xi).max(T::zero()).sqrt()
}

/// Subgradient of `h`, taking zero for the terms with `ξ^T Σ_i ξ = 0`.
fn gap_and_grad<T: Scalar>(prob: &MixtureProblem<T>, xi: &[T]) -> (T, Vec<T>) {
    let d = xi.len();
    let mut g = vec![T::zero(); d];
    let mut val = T::zero();
    let mut add = |m: &SymMat<T>, w: T| {
        let mv = m.mul_vec(xi);
        let q = crate::matcore::dot(xi, &mv).max(T::zero());
        let s = q.sqrt();
        val = val + w * s;
        if s > T::zero() {
            for k in 0..d {
                g[k] = g[k] + w * mv[k] / s;
            }
        }
    };
    for (p, c) in prob.weights().iter().zip(prob.covs()) {
        add(c, *p);
    }
    add(prob.target(), -T::one());
    (val, g)
}

fn normalize<T: Scalar>(v: &mut [T]) -> bool {
    let n = norm(v);
    if !(n > T::zero()) || !n.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x = *x / n);
    true
}

fn tangent<T: Scalar>(xi: &[T], g: &[T]) -> Vec<T> {
    let r = crate::matcore::dot(xi, g);
    g.iter().zip(xi).map(|(a, b)| *a - r * *b).collect()
}

/// Projected subgradient descent on the unit sphere with step `1/k`.
fn descend<T: Scalar>(prob: &MixtureProblem<T>, start: &[T], iters: usize, root_scale: T) -> (Vec<T>, T) {
    let mut xi = start.to_vec();
    if !normalize(&mut xi) {
        return (xi, T::infinity());
    }
    let mut best = (xi.clone(), sqrt_gap(prob, &xi));
    for k in 1..=iters {
        let (_, g) = gap_and_grad(prob, &xi);
        let t = tangent(&xi, &g);
        let step = T::one() / (T::c(k as f64) * root_scale);
        let mut next: Vec<T> = xi.iter().zip(&t).map(|(a, b)| *a - step * *b).collect();
        if !normalize(&mut next) {
            break;
        }
        xi = next;
        let v = sqrt_gap(prob, &xi);
        if v < best.1 {
            best = (xi.clone(), v);
        }
    }
    best
}

/// Armijo backtracking along the tangent gradient.
fn refine<T: Scalar>(prob: &MixtureProblem<T>, start: (Vec<T>, T), root_scale: T) -> (Vec<T>, T) {
    let (mut xi, mut val) = start;
    let mut step = T::c(0.5) / root_scale;
    for _ in 0..200 {
        let (_, g) = gap_and_grad(prob, &xi);
        let t = tangent(&xi, &g);
        let tn = crate::matcore::dot(&t, &t);
        if tn <= T::c(1e-30) * root_scale * root_scale {
            break;
        }
        let mut moved = false;
        for _ in 0..40 {
            let mut cand: Vec<T> = xi.iter().zip(&t).map(|(a, b)| *a - step * *b).collect();
            if normalize(&mut cand) {
                let v = sqrt_gap(prob, &cand);
                if v <= val - T::c(1e-4) * step * tn {
                    xi = cand;
                    val = v;
                    moved = true;
                    step = step * T::c(2.0);
                    break;
                }
            }
            step = step * T::c(0.5);
        }
        if !moved {
            break;
        }
    }
    (xi, val)
}

/// Result of the n=2 scan of `λ_min(P(α))`, `P(α) = p1² Σ1 + p2² Σ2 + p1 p2 (α Σ1 + Σ2/α) - Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaScan<T> {
    pub alpha: T,
    pub lambda_min: T,
    pub xi: Vec<T>,
}

fn p_alpha<T: Scalar>(prob: &MixtureProblem<T>, alpha: T) -> SymMat<T> {
    let (p1, p2) = (prob.weights()[0], prob.weights()[1]);
    let (s1, s2) = (&prob.covs()[0], &prob.covs()[1]);
    s1.scale(p1 * p1 + p1 * p2 * alpha)
        .add(&s2.scale(p2 * p2 + p1 * p2 / alpha))
        .sub(prob.target())
}

/// Minimizes `λ_min(P(α))` over `α > 0`: log-spaced scan on `[1e-6, 1e6]` and
/// golden-section refinement. `None` unless `n = 2`.
pub fn alpha_scan<T: Scalar>(prob: &MixtureProblem<T>, points: usize) -> Option<AlphaScan<T>> {
    if prob.n() != 2 {
        return None;
    }
    let f = |u: T| eigh(&p_alpha(prob, T::c(10.0).powf(u))).min();
    let (u, _) = grid_then_golden(f, T::c(-6.0), T::c(6.0), points, T::c(1e-10));
    let alpha = T::c(10.0).powf(u);
    let e = eigh(&p_alpha(prob, alpha));
    Some(AlphaScan {
        alpha,
        lambda_min: e.min(),
        xi: e.vector(0),
    })
}

fn starts<T: Scalar>(prob: &MixtureProblem<T>, cfg: &CheckConfig<T>) -> Vec<Vec<T>> {
    let d = prob.d();
    let mut out = Vec::new();
    for m in std::iter::once(prob.target()).chain(prob.covs()) {
        let e = eigh(m);
        out.extend((0..d).map(|k| e.vector(k)));
    }
    out.extend((0..d).map(|k| (0..d).map(|j| if j == k { T::one() } else { T::zero() }).collect()));
    out.extend((0..cfg.random_starts).map(|s| {
        let mut rng = CounterRng::stream(cfg.seed, s as u64);
        rng.unit_vector(d).into_iter().map(T::c).collect()
    }));
    out
}

fn angular<T: Scalar>(prob: &MixtureProblem<T>, points: usize) -> (Vec<T>, T) {
    let dir = |th: T| vec![th.cos(), th.sin()];
    let f = |th: T| sqrt_gap(prob, &dir(th));
    let pi = T::PI();
    let h = pi / T::c(points.max(3) as f64);
    let (th, v) = grid_then_golden(f, T::zero(), pi - h, points.max(3), T::c(1e-13));
    let (th2, v2) = golden_section(f, th - h, th + h, T::c(1e-13));
    if v2 < v {
        (dir(th2), v2)
    } else {
        (dir(th), v)
    }
}

/// Decides `sqrt(ξ^T Σ ξ) <= Σ_i p_i sqrt(ξ^T Σ_i ξ)` for every `ξ` by
/// minimizing `h` over the unit sphere. Multistart projected subgradient
/// descent with Armijo refinement; an angular grid for `d = 2`; exact for
/// `d = 1`; for `n = 2` the scan of `P(α)` supplies an extra candidate.
pub fn check_inegsqrt<T: Scalar>(prob: &MixtureProblem<T>, cfg: &CheckConfig<T>) -> Verdict<T> {
    let d = prob.d();
    let root_scale = prob.scale().sqrt();
    let thresh = cfg.tol * root_scale;
    let mut diag = Diagnostics::default();
    let mut cands: Vec<(Vec<T>, T)> = Vec::new();
    if d == 1 {
        let xi = vec![T::one()];
        let v = sqrt_gap(prob, &xi);
        cands.push((xi, v));
    } else {
        let st = starts(prob, cfg);
        diag.iterations = st.len() * cfg.iterations;
        let mut found: Vec<(Vec<T>, T)> =
            st.par_iter().map(|s| descend(prob, s, cfg.iterations, root_scale)).collect();
        found.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        cands.extend(found.into_iter().take(3).map(|c| refine(prob, c, root_scale)));
        if d == 2 {
            let a = angular(prob, cfg.grid_points);
            diag.residual("angular_min", a.1.f64());
            cands.push(a);
        }
    }
    let sphere_min = cands.iter().map(|c| c.1).fold(T::infinity(), |a, b| a.min(b));
    if let Some(scan) = alpha_scan(prob, cfg.alpha_points) {
        diag.residual("alpha", scan.alpha.f64());
        diag.residual("alpha_lambda_min", scan.lambda_min.f64());
        let v = sqrt_gap(prob, &scan.xi);
        let c = refine(prob, (scan.xi.clone(), v), root_scale);
        if (scan.lambda_min < -thresh * root_scale) != (sphere_min < -thresh) {
            diag.note("sphere search and alpha scan disagree; keeping the verified minimum");
        }
        cands.push(c);
    }
    let (xi, min_h) = cands
        .into_iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        .expect("at least one candidate");
    diag.residual("sphere_min", sphere_min.f64());
    let mut v = if min_h < -thresh {
        Verdict::fails(min_h, Witness::Direction { xi, value: min_h })
    } else {
        Verdict::holds(min_h).with_witness(Witness::Direction { xi, value: min_h })
    };
    v.boundary = min_h.abs() <= T::c(2.0) * thresh;
    v.with_diagnostics(diag)
}

impl<T: Scalar> Verdict<T> {
    /// Relabels the verdict status, keeping margin and diagnostics.
    pub(crate) fn with_status(mut self, s: Status) -> Self {
        self.status = s;
        self
    }
}
