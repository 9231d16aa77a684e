mod common;

use std::collections::BTreeMap;

use common::*;
use gmcvx_core::conditions::{check_inecov, check_inecovf, check_inegsqrt, CheckConfig};
use gmcvx_core::cxverify::{
    exact_expectation, mc_expectation, radial_order_check, Gaussian, McConfig, RadialLaw, RadialNoise, TestFunction,
};
use gmcvx_core::rng::CounterRng;
use gmcvx_core::sweep::{boundary_bisect, run_sweep, to_csv, CellStatus, Checker, ProblemTemplate, SweepSpec};
use gmcvx_core::{GammaWitness, Mat, MixtureProblem, Status, SymMat};

#[test]
fn monte_carlo_matches_closed_forms() {
    let mut rng = CounterRng::new(77);
    for k in 0..6 {
        let d = 1 + k % 3;
        let law = Gaussian {
            mean: (0..d).map(|_| rng.normal()).collect(),
            cov: random_psd(&mut rng, d, d),
        };
        let xi: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let m = random_psd(&mut rng, d, d);
        let xi0: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let fs = [TestFunction::abs_linear(xi), TestFunction::quadratic(m, xi0, 0.3).unwrap()];
        for f in &fs {
            let exact = exact_expectation(&law, f).unwrap();
            let est = mc_expectation(&law, f, 1_000_000, 5, k as u64);
            assert!(
                (est.mean - exact).abs() <= 5.0 * est.std_err,
                "{}: {} vs {exact} (se {})",
                f.label,
                est.mean,
                est.std_err
            );
        }
    }
}

#[test]
fn sampled_abs_linear_agrees_with_sqrt_check() {
    let cfg = CheckConfig::default();
    let mut compared = 0;
    for k in 0..200u64 {
        let prob = random_problem(202, k);
        let v = check_inegsqrt(&prob, &cfg);
        let band = 1e-3 * prob.scale().sqrt();
        if v.margin.abs() <= band || v.status == Status::Unknown {
            continue;
        }
        let mut rng = CounterRng::stream(203, k);
        let law_gap = |xi: &[f64]| {
            let f = TestFunction::abs_linear(xi.to_vec());
            let lhs = exact_expectation(&Gaussian::centered(prob.target().clone()), &f).unwrap();
            let rhs: f64 = prob
                .covs()
                .iter()
                .zip(prob.weights())
                .map(|(c, w)| w * exact_expectation(&Gaussian::centered(c.clone()), &f).unwrap())
                .sum();
            rhs - lhs
        };
        let mut dirs: Vec<Vec<f64>> = (0..4000).map(|_| rng.unit_vector(prob.d())).collect();
        if let Some(gmcvx_core::Witness::Direction { xi, .. } | gmcvx_core::Witness::Alpha { xi, .. }) = &v.witness {
            dirs.push(xi.clone());
        }
        let min = dirs.iter().map(|xi| law_gap(xi)).fold(f64::INFINITY, f64::min);
        if v.is_holds() {
            assert!(min >= -1e-9 * prob.scale().sqrt(), "problem {k}: {min}");
        } else {
            assert!(min < 0.0, "problem {k}: {min}");
        }
        compared += 1;
    }
    assert!(compared > 150, "{compared}");
}

fn example2_spec(a: (f64, f64, f64), b: (f64, f64, f64), checkers: &str) -> SweepSpec {
    SweepSpec::from_json(&format!(
        r#"{{"template": {{"p": [0.5, 0.5],
              "components": [{{"cov": [[8, 0], [0, 4]]}}, {{"cov": [[4, 0], [0, 8]]}}],
              "target": [["a", "b"], ["b", "a"]]}},
            "axes": [{{"name": "a", "min": {}, "max": {}, "step": {}}},
                     {{"name": "b", "min": {}, "max": {}, "step": {}}}],
            "checkers": {checkers}}}"#,
        a.0, a.1, a.2, b.0, b.1, b.2
    ))
    .unwrap()
}

#[test]
fn sweep_is_deterministic_and_rows_are_intervals() {
    let spec = example2_spec((1.0, 5.5, 0.5), (-5.0, 5.0, 0.25), r#"["inegsqrt"]"#);
    let first = run_sweep(&spec).unwrap();
    assert_eq!(to_csv(&first), to_csv(&run_sweep(&spec).unwrap()));
    for row in first.chunk_by(|x, y| x.row == y.row) {
        let holds: Vec<bool> = row.iter().map(|c| c.results[0].status == CellStatus::Holds).collect();
        let idx: Vec<usize> = (0..holds.len()).filter(|&k| holds[k]).collect();
        let (lo, hi) = (idx[0], *idx.last().unwrap());
        assert!(holds[lo..=hi].iter().all(|h| *h), "row a = {}", row[0].params.0);
        assert_eq!(lo + hi, holds.len() - 1, "row a = {} not symmetric", row[0].params.0);
    }
}

#[test]
fn one_cell_sweep_equals_direct_call() {
    let spec = example2_spec((5.0, 5.0, 1.0), (0.5, 0.5, 1.0), r#"["inegsqrt", "inecov"]"#);
    let cells = run_sweep(&spec).unwrap();
    assert_eq!(cells.len(), 1);
    let prob = example2(5.0, 0.5).unwrap();
    let cfg = CheckConfig::default();
    let direct = [check_inegsqrt(&prob, &cfg), check_inecov(&prob, &cfg)];
    for (r, v) in cells[0].results.iter().zip(&direct) {
        assert_eq!(r.status.as_str(), v.status.as_str());
        assert_eq!(r.margin, v.margin);
    }
}

#[test]
fn scalar_threshold_by_bisection() {
    let template: ProblemTemplate = serde_json::from_str(
        r#"{"p": [0.3, 0.7], "components": [{"cov": [[1]]}, {"cov": [[4]]}], "target": [["s^2"]]}"#,
    )
    .unwrap();
    let cfg = CheckConfig::default();
    let s = boundary_bisect(&template, "s", &BTreeMap::new(), Checker::Inegsqrt, (0.5, 3.0), 1e-8, &cfg).unwrap();
    assert!((s - (0.3 + 0.7 * 2.0)).abs() <= 1e-6, "{s}");
}

fn sigma12(a: f64, x: f64) -> f64 {
    (1.0 - (a - 3.0).powi(2) / 8.0).max(0.0).sqrt() + 2.0 * (SQRT2 - 1.0) * (1.0 - x * x).max(0.0).sqrt()
}

fn sigma11(a: f64, x: f64) -> f64 {
    1.0 + a + 2.0 * (1.0 + SQRT2) * x
}

#[test]
fn example3_domination_anchor() {
    let level = sigma11(17.0 / 3.0, 1.0);
    let (mut lo, mut hi) = (17.0 / 3.0, 3.0 + 2.0 * SQRT2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sigma11(mid, example3_f(mid)) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a_hat = 0.5 * (lo + hi);
    assert!((a_hat - 5.7152).abs() < 5e-5, "{a_hat}");
    assert!((sigma12(a_hat, example3_f(a_hat)) - 0.3972).abs() < 1e-4);

    let target = |a: f64, x: f64| SymMat::from_f64(&[&[sigma11(a, x), sigma12(a, x)], &[sigma12(a, x), sigma11(a, x)]]);
    let prob = example3(SymMat::from_f64(&[&[level, 1.0 / 3.0], &[1.0 / 3.0, level]]));
    assert!(check_inecov(&prob, &CheckConfig::default()).is_holds());

    let g = GammaWitness::new(3, 2, example3_gamma(17.0 / 3.0, 1.0)).unwrap();
    let prob = example3(target(17.0 / 3.0, 1.0));
    assert!(g.validate_pairwise(&prob, 1e-9).valid);
    assert!(!g.validate(&prob, 1e-9).valid);
    assert!(check_inecovf(&prob, &CheckConfig::default()).is_holds());
}

#[test]
fn example3_diagonal_threshold() {
    let cfg = CheckConfig::default();
    let bound = 6.0 + 4.0 * SQRT2;
    for (s, expected) in [(bound - 0.05, true), (bound + 0.05, false)] {
        let prob = example3(SymMat::diag(&[s, 3.0]));
        assert_eq!(check_inegsqrt(&prob, &cfg).is_holds(), expected, "{s}");
        assert_eq!(check_inecov(&prob, &cfg).is_holds(), expected, "{s}");
    }
}

fn radial(law: RadialLaw, q: usize) -> RadialNoise {
    RadialNoise { q, law }
}

#[test]
fn gaussian_radial_noise_reduces_to_sqrt_check() {
    let cfg = CheckConfig::default();
    let mc = McConfig { samples: 20_000, seed: 2 };
    let s1 = Mat::from_f64(&[&[2.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
    let s2 = Mat::from_f64(&[&[1.0, 0.0, 0.5], &[0.0, 2.0, 0.0]]);
    for scale in [0.8, 1.6] {
        let sigma = Mat::from_f64(&[&[1.2, 0.3, 0.0], &[0.0, 1.1, 0.2]]).scale(scale);
        let v = radial_order_check(&sigma, &[s1.clone(), s2.clone()], &[0.5, 0.5], &radial(RadialLaw::Gaussian, 3), &mc, &cfg)
            .unwrap();
        let gram = |s: &Mat<f64>| SymMat::symmetrize(&s.mul_t(s));
        let prob = MixtureProblem::centered(vec![0.5, 0.5], vec![gram(&s1), gram(&s2)], gram(&sigma)).unwrap();
        assert_eq!(v.status, check_inegsqrt(&prob, &cfg).status, "scale {scale}");
    }
}

#[test]
fn radial_noise_identical_sides_hold_and_scaled_side_fails() {
    let cfg = CheckConfig::default();
    let mc = McConfig { samples: 50_000, seed: 3 };
    let s = Mat::from_f64(&[&[1.0, 0.5], &[0.0, 2.0]]);
    for law in [RadialLaw::UniformSphere, RadialLaw::UniformBall, RadialLaw::Gaussian] {
        let noise = radial(law, 2);
        let v = radial_order_check(&s, &[s.clone(), s.clone()], &[0.4, 0.6], &noise, &mc, &cfg).unwrap();
        assert!(v.is_holds(), "{law:?}");
        let v = radial_order_check(&s.scale(1.3), &[s.clone(), s.clone()], &[0.4, 0.6], &noise, &mc, &cfg).unwrap();
        assert!(v.is_fails(), "{law:?}");
        let get = |k: &str| v.diagnostics.residuals.iter().find(|(n, _)| n == k).unwrap().1;
        assert!((get("mc_lhs") - get("exact_lhs")).abs() <= 5.0 * get("mc_lhs_std_err"), "{law:?}");
        assert!(get("mc_rhs") < get("mc_lhs"));
    }
}
