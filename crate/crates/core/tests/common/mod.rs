#![allow(dead_code)]

use gmcvx_core::rng::CounterRng;
use gmcvx_core::{Mat, MixtureProblem, SymMat};

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

pub fn example1(lambda: f64) -> MixtureProblem<f64> {
    MixtureProblem::centered(
        vec![0.5, 0.5],
        vec![SymMat::identity(2).scale(4.0), SymMat::diag(&[4.0, 4.0 * lambda * lambda])],
        SymMat::from_f64(&[&[2.0, 1.0 + lambda], &[1.0 + lambda, 1.0 + lambda * lambda]]),
    )
    .unwrap()
}

/// `Γ = 4 [[1, 0, 0, λ], [0, 1, 1, 0], [0, 1, 1, 0], [λ, 0, 0, λ²]]`.
pub fn example1_gamma(lambda: f64) -> SymMat<f64> {
    SymMat::from_f64(&[
        &[4.0, 0.0, 0.0, 4.0 * lambda],
        &[0.0, 4.0, 4.0, 0.0],
        &[0.0, 4.0, 4.0, 0.0],
        &[4.0 * lambda, 0.0, 0.0, 4.0 * lambda * lambda],
    ])
}

pub fn example2(a: f64, b: f64) -> Option<MixtureProblem<f64>> {
    MixtureProblem::centered(
        vec![0.5, 0.5],
        vec![SymMat::diag(&[8.0, 4.0]), SymMat::diag(&[4.0, 8.0])],
        SymMat::from_f64(&[&[a, b], &[b, a]]),
    )
    .ok()
}

/// Closed-form region of `Σ = [[a, b], [b, a]]` satisfying the square-root inequality.
pub fn example2_region(a: f64, b: f64) -> bool {
    let b = b.abs();
    if a < 0.0 {
        return false;
    }
    if a <= 3.0 {
        b <= a
    } else if a <= 17.0 / 3.0 {
        b <= 6.0 - a
    } else if a <= 3.0 + 2.0 * SQRT2 {
        b * b <= 1.0 - (a - 3.0).powi(2) / 8.0
    } else {
        false
    }
}

pub fn example3(target: SymMat<f64>) -> MixtureProblem<f64> {
    MixtureProblem::centered(
        vec![1.0 / 3.0; 3],
        vec![SymMat::diag(&[18.0, 9.0]), SymMat::diag(&[9.0, 9.0]), SymMat::diag(&[9.0, 18.0])],
        target,
    )
    .unwrap()
}

/// The `6 × 6` matrix `Γ(a, x)` built from `Θ(a)`, `Θ~(x)` and `Θ^(x)` (upper signs).
pub fn example3_gamma(a: f64, x: f64) -> SymMat<f64> {
    let q = (1.0 - (a - 3.0).powi(2) / 8.0).max(0.0).sqrt();
    let w = (1.0 - x * x).max(0.0).sqrt();
    let theta = [[4.5 * (a - 3.0), 18.0 * q], [-9.0 * q, 4.5 * (a - 3.0)]];
    let tilde = [[9.0 * SQRT2 * x, 9.0 * SQRT2 * w], [-9.0 * w, 9.0 * x]];
    let hat = [[9.0 * x, -9.0 * w], [9.0 * SQRT2 * w, 9.0 * SQRT2 * x]];
    let diag = [[18.0, 9.0], [9.0, 9.0], [9.0, 18.0]];
    let mut g = Mat::zeros(6, 6);
    for k in 0..2 {
        for i in 0..3 {
            g[(2 * i + k, 2 * i + k)] = diag[i][k];
        }
        for l in 0..2 {
            g[(k, 2 + l)] = tilde[k][l];
            g[(2 + l, k)] = tilde[k][l];
            g[(k, 4 + l)] = theta[k][l];
            g[(4 + l, k)] = theta[k][l];
            // Γ_(23) = Θ^(x)^T
            g[(2 + k, 4 + l)] = hat[l][k];
            g[(4 + l, 2 + k)] = hat[l][k];
        }
    }
    SymMat::from_mat(&g, 0.0).unwrap()
}

pub fn example3_f(a: f64) -> f64 {
    ((a + 2.0 * SQRT2 - 3.0) / (4.0 * SQRT2)).sqrt()
}

/// Random PSD matrix `G G^T` with `G` of size `d × rank`.
pub fn random_psd(rng: &mut CounterRng, d: usize, rank: usize) -> SymMat<f64> {
    let g = Mat::from_fn(d, rank, |_, _| rng.normal());
    SymMat::symmetrize(&g.mul_t(&g))
}

pub fn random_weights(rng: &mut CounterRng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| 0.2 + rng.uniform()).collect();
    let s: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / s).collect();
    let head: f64 = p[..n - 1].iter().sum();
    p[n - 1] = 1.0 - head;
    p
}

/// Random problem with `d ≤ 3`, `n ≤ 3`, some singular components and a
/// target scaled log-uniformly around the mixture covariance.
pub fn random_problem(seed: u64, k: u64) -> MixtureProblem<f64> {
    let mut rng = CounterRng::stream(seed, k);
    let d = 1 + rng.below(3);
    let n = 2 + rng.below(2);
    let p = random_weights(&mut rng, n);
    let covs: Vec<SymMat<f64>> = (0..n)
        .map(|_| {
            let rank = if rng.uniform() < 0.3 { rng.below(d) } else { d };
            random_psd(&mut rng, d, rank.max(if d == 1 { 1 } else { 0 }))
        })
        .collect();
    let shape = random_psd(&mut rng, d, d);
    let avg = covs.iter().zip(&p).fold(SymMat::zeros(d), |acc, (c, w)| acc.add(&c.scale(*w)));
    let tr = |m: &SymMat<f64>| m.trace().max(1e-12);
    let t = 10f64.powf(rng.uniform_in(-1.5, 0.5)) * tr(&avg) / tr(&shape);
    MixtureProblem::centered(p, covs, shape.scale(t)).unwrap()
}
