//! Block-constrained PSD completion: symmetric `Γ` with `Γ_(ii) = Σ_i`,
//! `Σ ⪯ AΓA^T`, and `Γ` in the full PSD cone or in every pair-block cone.
//!
//! The variables are `(Γ, S)` with `S = AΓA^T - Σ`. Dykstra's method cycles
//! through the cone sets and the affine set; the affine projection has a
//! closed form. Iterates are first pushed into shifted cones so that a point
//! in the interior is found, then the shift is dropped.

mod polish;

use crate::coupling::{gamma_from_factors, wasserstein_blocks};
use crate::matcore::{eigh, Mat, SymMat};
use crate::problem::MixtureProblem;
use crate::scalar::{Scalar, Tolerances};
use crate::verdict::GammaWitness;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    FullPsd,
    PairwisePsd,
}

#[derive(Debug, Clone, Copy)]
pub struct FeasibilityConfig<T> {
    pub max_iter: usize,
    /// Relative distance between cone and affine iterates regarded as converged.
    pub tol: T,
    /// PSD slack used when validating a candidate `Γ`.
    pub eps_psd: T,
    /// Validate the affine iterate every `check_every` sweeps.
    pub check_every: usize,
}

impl<T: Scalar> Default for FeasibilityConfig<T> {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            tol: T::c(1e-8),
            eps_psd: Tolerances::<T>::default().eps_psd,
            check_every: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeasibilityTask<'a, T> {
    pub problem: &'a MixtureProblem<T>,
    pub cone: Cone,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeasibilityStatus<T> {
    Feasible(GammaWitness<T>),
    /// Budget exhausted; `last` is the final affine iterate (not validated).
    MaxIterations {
        cone_distance: T,
        affine_distance: T,
        last: GammaWitness<T>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityOutcome<T> {
    pub status: FeasibilityStatus<T>,
    pub iterations: usize,
    /// Distance from the last cone iterate to the affine set.
    pub cone_distance: T,
    /// Block and dominance violation of the final affine iterate.
    pub affine_distance: T,
    /// Cone-to-affine step length of every sweep, relative to the problem scale.
    pub history: Vec<T>,
}

impl<T: Scalar> FeasibilityOutcome<T> {
    pub fn gamma(&self) -> Option<&GammaWitness<T>> {
        match &self.status {
            FeasibilityStatus::Feasible(g) => Some(g),
            _ => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.gamma().is_some()
    }
}

#[derive(Debug, Clone)]
struct Point<T> {
    gamma: Mat<T>,
    s: Mat<T>,
}

impl<T: Scalar> Point<T> {
    fn add(&self, o: &Self) -> Self {
        Self {
            gamma: &self.gamma + &o.gamma,
            s: &self.s + &o.s,
        }
    }

    fn sub(&self, o: &Self) -> Self {
        Self {
            gamma: &self.gamma - &o.gamma,
            s: &self.s - &o.s,
        }
    }

    fn norm(&self) -> T {
        let g = self.gamma.frobenius();
        let s = self.s.frobenius();
        (g * g + s * s).sqrt()
    }

    fn zeros(nd: usize, d: usize) -> Self {
        Self {
            gamma: Mat::zeros(nd, nd),
            s: Mat::zeros(d, d),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Set<T> {
    Affine,
    FullCone { shift_gamma: T, shift_s: T },
    PairCone { i: usize, j: usize, shift: T },
    SlackCone { shift: T },
}

/// Clamps the spectrum from below at `floor`.
fn clamp_spectrum<T: Scalar>(m: &Mat<T>, floor: T) -> Mat<T> {
    let e = eigh(&SymMat::symmetrize(m));
    if e.min() >= floor {
        return SymMat::symmetrize(m).into_mat();
    }
    e.apply(|l| l.max(floor)).into_mat()
}

struct Engine<'a, T> {
    prob: &'a MixtureProblem<T>,
    n: usize,
    d: usize,
    /// `Σ p_i² Σ_i - Σ`.
    offset: Mat<T>,
    denom: T,
}

impl<'a, T: Scalar> Engine<'a, T> {
    fn new(prob: &'a MixtureProblem<T>) -> Self {
        let n = prob.n();
        let d = prob.d();
        let p = prob.weights();
        let mut offset = -prob.target().as_mat();
        for (w, c) in p.iter().zip(prob.covs()) {
            offset = &offset + &c.as_mat().scale(*w * *w);
        }
        let mut sum = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                sum = sum + p[i] * p[i] * p[j] * p[j];
            }
        }
        Self {
            prob,
            n,
            d,
            offset,
            denom: T::one() + T::c(2.0) * sum,
        }
    }

    /// Orthogonal projection onto `{Γ_(ii) = Σ_i, S = AΓA^T - Σ}`.
    fn project_affine(&self, x: &Point<T>) -> Point<T> {
        let (n, d) = (self.n, self.d);
        let p = self.prob.weights();
        let g0 = SymMat::symmetrize(&x.gamma).into_mat();
        let s0 = SymMat::symmetrize(&x.s).into_mat();
        let mut r = &self.offset - &s0;
        for i in 0..n {
            for j in i + 1..n {
                let th = g0.block(i * d, j * d, d, d);
                let sym = &th + &th.transpose();
                r = &r + &sym.scale(p[i] * p[j]);
            }
        }
        let y = SymMat::symmetrize(&r.scale(T::one() / self.denom)).into_mat();
        let mut g = g0;
        for i in 0..n {
            g.set_block(i * d, i * d, self.prob.covs()[i].as_mat());
            for j in i + 1..n {
                let th = &g.block(i * d, j * d, d, d) - &y.scale(p[i] * p[j]);
                g.set_block(j * d, i * d, &th.transpose());
                g.set_block(i * d, j * d, &th);
            }
        }
        Point { gamma: g, s: &s0 + &y }
    }

    fn project(&self, set: Set<T>, x: &Point<T>) -> Point<T> {
        match set {
            Set::Affine => self.project_affine(x),
            Set::FullCone { shift_gamma, shift_s } => Point {
                gamma: clamp_spectrum(&x.gamma, shift_gamma),
                s: clamp_spectrum(&x.s, shift_s),
            },
            Set::SlackCone { shift } => Point {
                gamma: x.gamma.clone(),
                s: clamp_spectrum(&x.s, shift),
            },
            Set::PairCone { i, j, shift } => {
                let d = self.d;
                let idx: Vec<usize> = (0..d).map(|k| i * d + k).chain((0..d).map(|k| j * d + k)).collect();
                let blk = Mat::from_fn(2 * d, 2 * d, |r, c| x.gamma[(idx[r], idx[c])]);
                let proj = clamp_spectrum(&blk, shift);
                let mut g = x.gamma.clone();
                for r in 0..2 * d {
                    for c in 0..2 * d {
                        g[(idx[r], idx[c])] = proj[(r, c)];
                    }
                }
                Point { gamma: g, s: x.s.clone() }
            }
        }
    }

    fn sets(&self, cone: Cone, shift_gamma: T, shift_s: T) -> Vec<Set<T>> {
        let mut sets = Vec::new();
        match cone {
            Cone::FullPsd => sets.push(Set::FullCone { shift_gamma, shift_s }),
            Cone::PairwisePsd => {
                for i in 0..self.n {
                    for j in i + 1..self.n {
                        sets.push(Set::PairCone {
                            i,
                            j,
                            shift: shift_gamma,
                        });
                    }
                }
                sets.push(Set::SlackCone { shift: shift_s });
            }
        }
        sets.push(Set::Affine);
        sets
    }

    fn start(&self, gamma: &GammaWitness<T>) -> Point<T> {
        let g = gamma.gamma().as_mat().clone();
        let s = self.prob.a_gamma_at(&g).sub(self.prob.target()).into_mat();
        self.project_affine(&Point { gamma: g, s })
    }
}

/// Sum of Frobenius norms of the negative parts of `Γ` (or its pair blocks)
/// and of `AΓA^T - Σ`, after forcing the diagonal blocks.
pub fn combined_residual<T: Scalar>(prob: &MixtureProblem<T>, gamma: &GammaWitness<T>, cone: Cone) -> T {
    let mut g = gamma.clone();
    g.enforce_diagonal(prob.covs());
    let neg = |m: &SymMat<T>| {
        let e = eigh(m);
        e.eigenvalues
            .iter()
            .filter(|l| **l < T::zero())
            .map(|l| *l * *l)
            .sum::<T>()
            .sqrt()
    };
    let cone_part = match cone {
        Cone::FullPsd => neg(g.gamma()),
        Cone::PairwisePsd => {
            let mut s = T::zero();
            for i in 0..g.n() {
                for j in i + 1..g.n() {
                    s = s + neg(&g.pair_block(i, j));
                }
            }
            s
        }
    };
    let dom = prob.a_gamma_at(g.gamma()).sub(prob.target());
    cone_part + neg(&dom)
}

/// Canonical starting points: block-diagonal; all off-diagonal blocks `Σ`
/// when `Σ ⪯ Σ_i` for every `i`; Wasserstein blocks for two components.
pub fn default_candidates<T: Scalar>(prob: &MixtureProblem<T>) -> Vec<GammaWitness<T>> {
    let mut out = vec![GammaWitness::block_diagonal(prob)];
    let eps = Tolerances::<T>::default().eps_psd;
    let dominated = prob
        .covs()
        .iter()
        .all(|c| crate::matcore::is_psd(&c.sub(prob.target()), eps).is_ok_and(|r| r.is_psd));
    if dominated {
        out.push(GammaWitness::all_blocks(prob, prob.target()));
    }
    if prob.n() == 2 {
        if let Ok((s1, s2)) = wasserstein_blocks(&prob.covs()[0], &prob.covs()[1]) {
            out.push(gamma_from_factors(prob, &s1, &s2));
        }
    }
    out
}

/// Candidate with the smallest combined residual; block-diagonal when the list is empty.
pub fn warm_start_from<T: Scalar>(
    prob: &MixtureProblem<T>,
    candidates: &[GammaWitness<T>],
    cone: Cone,
) -> GammaWitness<T> {
    candidates
        .iter()
        .filter(|g| g.n() == prob.n() && g.d() == prob.d() && g.gamma().is_finite())
        .map(|g| (combined_residual(prob, g, cone), g))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(_, g)| g.clone())
        .unwrap_or_else(|| GammaWitness::block_diagonal(prob))
}

fn validate<T: Scalar>(prob: &MixtureProblem<T>, g: &GammaWitness<T>, cone: Cone, eps: T) -> bool {
    match cone {
        Cone::FullPsd => g.validate(prob, eps).valid,
        Cone::PairwisePsd => g.validate_pairwise(prob, eps).valid,
    }
}

/// Runs Dykstra's alternating projections from `start` (block-diagonal if `None`).
///
/// Phases use cone shifts `1e-3`, `1e-6` and `0` times the problem scale; the
/// `Γ` shift is capped by half the smallest eigenvalue of the `Σ_i`. A phase
/// ends early once its step length stops decreasing.
pub fn solve<T: Scalar>(
    task: &FeasibilityTask<'_, T>,
    start: Option<&GammaWitness<T>>,
    cfg: &FeasibilityConfig<T>,
) -> FeasibilityOutcome<T> {
    let prob = task.problem;
    let engine = Engine::new(prob);
    let scale = prob.scale();
    let (nd, d) = (prob.n() * prob.d(), prob.d());
    let block_floor = prob
        .covs()
        .iter()
        .map(|c| eigh(c).min())
        .fold(T::infinity(), |a, b| a.min(b))
        .max(T::zero());

    let init = start.cloned().unwrap_or_else(|| GammaWitness::block_diagonal(prob));
    let mut x = engine.start(&init);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut cone_distance = T::infinity();

    let g0 = GammaWitness::new(prob.n(), d, SymMat::symmetrize(&x.gamma)).expect("shape");
    if validate(prob, &g0, task.cone, cfg.eps_psd) {
        let affine_distance = combined_residual(prob, &g0, task.cone);
        return FeasibilityOutcome {
            status: FeasibilityStatus::Feasible(g0),
            iterations: 0,
            cone_distance: T::zero(),
            affine_distance,
            history,
        };
    }

    let phases = [(T::c(1e-3), 0.4), (T::c(1e-6), 0.3), (T::zero(), 1.0)];
    for (shift, share) in phases {
        let budget_end = if share >= 1.0 {
            cfg.max_iter
        } else {
            iterations + (cfg.max_iter as f64 * share) as usize
        };
        let shift_s = shift * scale;
        let shift_g = shift_s.min(T::c(0.5) * block_floor);
        let sets = engine.sets(task.cone, shift_g, shift_s);
        let mut incr: Vec<Point<T>> = sets.iter().map(|_| Point::zeros(nd, d)).collect();
        let mut best = T::infinity();
        let mut since_best = 0;
        let mut next_polish = T::c(1e-2);
        while iterations < budget_end {
            iterations += 1;
            let mut before_affine = x.clone();
            for (k, set) in sets.iter().enumerate() {
                let y = x.add(&incr[k]);
                let p = engine.project(*set, &y);
                incr[k] = y.sub(&p);
                if matches!(set, Set::Affine) {
                    before_affine = x.clone();
                }
                x = p;
            }
            let step = x.sub(&before_affine).norm() / scale;
            cone_distance = step;
            history.push(step);

            if iterations % cfg.check_every == 0 || step <= cfg.tol {
                let g = GammaWitness::new(prob.n(), d, SymMat::symmetrize(&x.gamma)).expect("shape");
                if validate(prob, &g, task.cone, cfg.eps_psd) {
                    let affine_distance = combined_residual(prob, &g, task.cone);
                    return FeasibilityOutcome {
                        status: FeasibilityStatus::Feasible(g),
                        iterations,
                        cone_distance,
                        affine_distance,
                        history,
                    };
                }
            }
            let try_polish = task.cone == Cone::FullPsd && step <= next_polish && step > T::zero();
            if try_polish {
                next_polish = step * T::c(0.1);
                if let Some(g) = polish::polish(prob, &x.gamma, &x.s, cfg.eps_psd) {
                    let affine_distance = combined_residual(prob, &g, task.cone);
                    return FeasibilityOutcome {
                        status: FeasibilityStatus::Feasible(g),
                        iterations,
                        cone_distance,
                        affine_distance,
                        history,
                    };
                }
            }
            if step < best * T::c(0.999) {
                best = step;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > 400 && share < 1.0 {
                    break;
                }
            }
        }
    }
    if task.cone == Cone::FullPsd {
        if let Some(g) = polish::polish(prob, &x.gamma, &x.s, cfg.eps_psd) {
            let affine_distance = combined_residual(prob, &g, task.cone);
            return FeasibilityOutcome {
                status: FeasibilityStatus::Feasible(g),
                iterations,
                cone_distance,
                affine_distance,
                history,
            };
        }
    }
    let g = GammaWitness::new(prob.n(), d, SymMat::symmetrize(&x.gamma)).expect("shape");
    let affine_distance = combined_residual(prob, &g, task.cone);
    FeasibilityOutcome {
        status: FeasibilityStatus::MaxIterations {
            cone_distance,
            affine_distance,
            last: g,
        },
        iterations,
        cone_distance,
        affine_distance,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> MixtureProblem<f64> {
        MixtureProblem::centered(
            vec![0.5, 0.5],
            vec![SymMat::identity(2).scale(4.0), SymMat::diag(&[4.0, 0.0])],
            SymMat::from_f64(&[&[2.0, 1.0], &[1.0, 1.0]]),
        )
        .unwrap()
    }

    #[test]
    fn affine_projection_is_idempotent_and_exact() {
        let prob = example1();
        let eng = Engine::new(&prob);
        let x = Point {
            gamma: SymMat::from_upper(4, |i, j| (i * 3 + j) as f64 * 0.1).into_mat(),
            s: SymMat::from_upper(2, |i, j| (i + j) as f64).into_mat(),
        };
        let p = eng.project_affine(&x);
        let s = prob.a_gamma_at(&p.gamma).sub(prob.target());
        assert!((&p.s - s.as_mat()).frobenius() < 1e-12);
        assert_eq!(p.gamma.block(2, 2, 2, 2), *prob.covs()[1].as_mat());
        let q = eng.project_affine(&p);
        assert!(q.sub(&p).norm() <= 1e-12);
    }

    #[test]
    fn affine_projection_is_orthogonal() {
        // the displacement is orthogonal to feasible directions
        let prob = example1();
        let eng = Engine::new(&prob);
        let x = Point {
            gamma: SymMat::from_upper(4, |i, j| ((i + 1) * (j + 2)) as f64 * 0.3).into_mat(),
            s: SymMat::from_upper(2, |i, j| (i * 2 + j) as f64).into_mat(),
        };
        let p = eng.project_affine(&x);
        let other = eng.project_affine(&Point {
            gamma: SymMat::from_upper(4, |i, j| (i as f64 - j as f64).sin()).into_mat(),
            s: Mat::identity(2),
        });
        let disp = x.sub(&p);
        let dir = other.sub(&p);
        let ip: f64 = disp.gamma.as_slice().iter().zip(dir.gamma.as_slice()).map(|(a, b)| a * b).sum::<f64>()
            + disp.s.as_slice().iter().zip(dir.s.as_slice()).map(|(a, b)| a * b).sum::<f64>();
        assert!(ip.abs() < 1e-9, "{ip}");
    }

    #[test]
    fn equal_components_feasible_fast() {
        let s = SymMat::<f64>::from_f64(&[&[2.0, 0.3], &[0.3, 1.0]]);
        let prob = MixtureProblem::centered(vec![0.3, 0.7], vec![s.clone(), s.clone()], s.clone()).unwrap();
        let start = warm_start_from(&prob, &default_candidates(&prob), Cone::FullPsd);
        let out = solve(
            &FeasibilityTask {
                problem: &prob,
                cone: Cone::FullPsd,
            },
            Some(&start),
            &FeasibilityConfig::default(),
        );
        assert!(out.is_feasible());
        assert!(out.iterations <= 5);
    }

    #[test]
    fn empty_candidates_give_block_diagonal() {
        let prob = example1();
        let g = warm_start_from(&prob, &[], Cone::FullPsd);
        assert_eq!(g, GammaWitness::block_diagonal(&prob));
    }
}
