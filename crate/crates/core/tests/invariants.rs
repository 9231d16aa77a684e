mod common;

use common::*;
use gmcvx_core::conditions::{check_correl_with, check_inecov, check_inegsqrt, CheckConfig};
use gmcvx_core::rng::CounterRng;
use gmcvx_core::{GammaWitness, Mat, MixtureProblem, Status, SymMat, Witness};
use proptest::prelude::*;

/// `Σ p_i sqrt(ξ^T Σ_i ξ) - sqrt(ξ^T Σ ξ)`, evaluated directly.
fn sqrt_gap_direct(prob: &MixtureProblem<f64>, xi: &[f64]) -> f64 {
    let q = |m: &SymMat<f64>| {
        let d = m.dim();
        let mut s = 0.0;
        for r in 0..d {
            for c in 0..d {
                s += xi[r] * m[(r, c)] * xi[c];
            }
        }
        s.max(0.0).sqrt()
    };
    prob.covs().iter().zip(prob.weights()).map(|(c, w)| w * q(c)).sum::<f64>() - q(prob.target())
}

fn normalized(xi: &[f64]) -> Vec<f64> {
    let n = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    xi.iter().map(|x| x / n).collect()
}

fn nonsingular(rng: &mut CounterRng, d: usize) -> Mat<f64> {
    loop {
        let m = Mat::from_fn(d, d, |_, _| rng.normal());
        if gmcvx_core::matcore::condition_number(&m) < 5.0 {
            break m;
        }
    }
}

fn cfg() -> CheckConfig<f64> {
    CheckConfig::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_problems_follow_the_weighted_std(
        p1 in 0.05f64..0.95, s1 in 0.0f64..3.0, s2 in 0.0f64..3.0, ratio in 0.5f64..1.5,
    ) {
        let bound = p1 * s1 + (1.0 - p1) * s2;
        let s = bound * ratio;
        prop_assume!((bound - s).abs() > 1e-9);
        let prob = MixtureProblem::centered(
            vec![p1, 1.0 - p1],
            vec![SymMat::diag(&[s1 * s1]), SymMat::diag(&[s2 * s2])],
            SymMat::diag(&[s * s]),
        ).unwrap();
        let expected = if s < bound { Status::Holds } else { Status::Fails };
        prop_assert_eq!(check_inegsqrt(&prob, &cfg()).status, expected);
        prop_assert_eq!(check_inecov(&prob, &cfg()).status, expected);
    }

    #[test]
    fn fails_witnesses_reverify(seed in 0u64..10_000) {
        let prob = random_problem(31, seed);
        let v = check_inegsqrt(&prob, &cfg());
        if v.is_fails() {
            let xi = match v.witness.as_ref().unwrap() {
                Witness::Direction { xi, .. } | Witness::Alpha { xi, .. } => normalized(xi),
                w => panic!("unexpected witness {w:?}"),
            };
            let tol = cfg().tol * prob.scale().sqrt();
            prop_assert!(sqrt_gap_direct(&prob, &xi) < -tol);
        }
    }

    #[test]
    fn congruence_preserves_the_sqrt_verdict(seed in 0u64..10_000) {
        let prob = random_problem(47, seed);
        let mut rng = CounterRng::stream(48, seed);
        let m = nonsingular(&mut rng, prob.d());
        let moved = prob.transformed(&m).unwrap();
        let a = check_inegsqrt(&prob, &cfg());
        let b = check_inegsqrt(&moved, &cfg());
        let clear = |v: &gmcvx_core::VerdictF64, s: f64| v.margin.abs() > 1e-3 * s.sqrt();
        prop_assume!(clear(&a, prob.scale()) && clear(&b, moved.scale()));
        prop_assert_eq!(a.status, b.status);
    }

    #[test]
    fn congruence_preserves_coupling_witnesses(seed in 0u64..10_000) {
        let prob = random_problem(53, seed);
        let v = check_inecov(&prob, &cfg());
        prop_assume!(v.is_holds());
        let mut rng = CounterRng::stream(54, seed);
        let m = nonsingular(&mut rng, prob.d());
        let moved = prob.transformed(&m).unwrap();
        let g = v.gamma().unwrap();
        let n = prob.n();
        let moved_g = GammaWitness::from_blocks(n, prob.d(), |i, j| m.matmul(&g.block(i, j)).mul_t(&m));
        prop_assert!(moved_g.validate(&moved, 1e-7).valid);
    }

    #[test]
    fn diagonal_rescaling_keeps_correl_certificates(
        s in 2.0f64..11.0, l1 in 0.1f64..5.0, l2 in 0.1f64..5.0, flip1: bool, flip2: bool,
    ) {
        let prob = example3(SymMat::diag(&[s, s * 0.8]));
        let base = check_correl_with(&prob, &Mat::identity(2), 1e-9).unwrap();
        prop_assert!(base.is_holds());
        let c0 = base.correl().unwrap().c.clone();
        let signs = [if flip1 { -1.0 } else { 1.0 }, if flip2 { -1.0 } else { 1.0 }];
        let lam = Mat::from_f64(&[&[signs[0] * l1, 0.0], &[0.0, signs[1] * l2]]);
        let v = check_correl_with(&prob, &lam, 1e-9).unwrap();
        prop_assert!(v.is_holds());
        let c = &v.correl().unwrap().c;
        for r in 0..2 {
            for k in 0..2 {
                prop_assert!((c[(r, k)] - signs[r] * signs[k] * c0[(r, k)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn coupling_sets_are_convex(a1 in 0.5f64..5.5, a2 in 0.5f64..5.5, t1 in -0.9f64..0.9, t2 in -0.9f64..0.9) {
        let b1 = t1 * a1.min(6.0 - a1).min(1.0);
        let b2 = t2 * a2.min(6.0 - a2).min(1.0);
        let (pa, pb) = (example2(a1, b1).unwrap(), example2(a2, b2).unwrap());
        let (va, vb) = (check_inecov(&pa, &cfg()), check_inecov(&pb, &cfg()));
        prop_assume!(va.is_holds() && vb.is_holds());
        let mid = example2(0.5 * (a1 + a2), 0.5 * (b1 + b2)).unwrap();
        let avg = va.gamma().unwrap().gamma().add(vb.gamma().unwrap().gamma()).scale(0.5);
        let w = GammaWitness::new(2, 2, avg).unwrap();
        prop_assert!(w.validate(&mid, 1e-7).valid);
    }
}
