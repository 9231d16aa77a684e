mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::*;
use gmcvx_core::conditions::{
    chain_report, check_correl_with, check_dominated_by_single, check_inecov, check_inegsqrt, find_correl_certificate,
    orthogonal_factors_from_gamma, CheckConfig,
};
use gmcvx_core::coupling::MartingaleKernel;
use gmcvx_core::cxverify::{exp_two_point_argmin, exp_two_point_search, test_mixture_dominated};
use gmcvx_core::matcore::eigh;
use gmcvx_core::psdfeas::{solve, Cone, FeasibilityConfig, FeasibilityTask};
use gmcvx_core::rng::CounterRng;
use gmcvx_core::sweep::{boundary_bisect, Checker, ProblemTemplate};
use gmcvx_core::{GammaWitness, Mat, MixtureProblem, Status, SymMat, Witness};

struct Outcome {
    ok: bool,
    detail: String,
}

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn c1_scalar_equivalence() -> Outcome {
    let cfg = CheckConfig::default();
    let mut disagree = 0;
    let mut banded = 0;
    for k in 0..1000u64 {
        let mut rng = CounterRng::stream(101, k);
        let n = 2 + rng.below(3);
        let p = random_weights(&mut rng, n);
        let sig: Vec<f64> = (0..n).map(|_| if rng.uniform() < 0.1 { 0.0 } else { rng.uniform_in(0.0, 3.0) }).collect();
        let bound: f64 = p.iter().zip(&sig).map(|(a, b)| a * b).sum();
        let s = if rng.uniform() < 0.05 { bound } else { bound * rng.uniform_in(0.5, 1.5) };
        let prob = MixtureProblem::centered(
            p,
            sig.iter().map(|x| SymMat::diag(&[x * x])).collect(),
            SymMat::diag(&[s * s]),
        )
        .unwrap();
        let gap = bound - s;
        if gap.abs() <= 1e-9 {
            banded += 1;
            continue;
        }
        let expected = if gap > 0.0 { Status::Holds } else { Status::Fails };
        let a = check_inegsqrt(&prob, &cfg).status;
        let b = check_inecov(&prob, &cfg).status;
        if a != expected || b != expected {
            disagree += 1;
        }
    }
    check(disagree == 0, format!("{disagree} disagreements, {banded} problems in the margin band"))
}

fn c2_example2_region() -> Outcome {
    let cfg = CheckConfig::default();
    let step = 0.05;
    let ring: Vec<(f64, f64)> = (0..72)
        .flat_map(|k| {
            let t = k as f64 * std::f64::consts::PI / 36.0;
            [(step * t.cos(), step * t.sin()), (0.5 * step * t.cos(), 0.5 * step * t.sin())]
        })
        .collect();
    let mut mismatches = Vec::new();
    let mut interior = 0;
    let mut inecov_missing = Vec::new();
    let mut checked = 0;
    for i in 0..=120 {
        let a = i as f64 * step;
        for j in 0..=240 {
            let b = -6.0 + j as f64 * step;
            let inside = example2_region(a, b);
            if ring.iter().any(|(da, db)| example2_region(a + da, b + db) != inside) {
                continue;
            }
            checked += 1;
            let v = example2(a, b).map(|p| (check_inegsqrt(&p, &cfg), p));
            let holds = v.as_ref().is_some_and(|(v, _)| v.is_holds());
            if holds != inside {
                mismatches.push((a, b));
            }
            if let Some((v, prob)) = v {
                if inside && v.is_holds() && v.margin > 0.02 {
                    interior += 1;
                    if !check_inecov(&prob, &cfg).is_holds() {
                        inecov_missing.push((a, b));
                    }
                }
            }
        }
    }
    check(
        mismatches.is_empty() && inecov_missing.is_empty(),
        format!(
            "{checked} cells off the boundary, {} inegsqrt mismatches {:?}; inecov holds on {}/{interior} interior cells {:?}",
            mismatches.len(),
            &mismatches[..mismatches.len().min(5)],
            interior - inecov_missing.len(),
            &inecov_missing[..inecov_missing.len().min(5)]
        ),
    )
}

fn template(json: &str) -> ProblemTemplate {
    serde_json::from_str(json).unwrap()
}

fn c3_thresholds() -> Outcome {
    let cfg = CheckConfig::default();
    let ex2 = template(
        r#"{"p": [0.5, 0.5],
            "components": [{"cov": [[8, 0], [0, 4]]}, {"cov": [[4, 0], [0, 8]]}],
            "target": [["a", "b"], ["b", "a"]]}"#,
    );
    let fixed: BTreeMap<String, f64> = [("b".to_string(), 0.0)].into();
    let a_star = boundary_bisect(&ex2, "a", &fixed, Checker::Inegsqrt, (3.0, 6.0), 1e-4, &cfg).unwrap();
    let ex3 = template(
        r#"{"p": ["1/3", "1/3", "1/3"],
            "components": [{"cov": [[18, 0], [0, 9]]}, {"cov": [[9, 0], [0, 9]]}, {"cov": [[9, 0], [0, 18]]}],
            "target": [["s", 0], [0, "s"]]}"#,
    );
    let s_star = boundary_bisect(&ex3, "s", &BTreeMap::new(), Checker::CorrelIdentity, (1.0, 20.0), 1e-4, &cfg).unwrap();
    let ea = (a_star - (3.0 + 2.0 * SQRT2)).abs();
    let es = (s_star - (6.0 + 4.0 * SQRT2)).abs();
    check(ea <= 1e-3 && es <= 1e-3, format!("a* = {a_star:.6} (err {ea:.1e}), s* = {s_star:.6} (err {es:.1e})"))
}

fn c4_example1_separation() -> Outcome {
    let cfg = CheckConfig::default();
    let prob = example1(0.0);
    let known = GammaWitness::new(2, 2, example1_gamma(0.0)).unwrap();
    let known_ok = known.validate(&prob, 1e-12).valid;
    let inecov = check_inecov(&prob, &cfg);
    let engine = solve(
        &FeasibilityTask {
            problem: &prob,
            cone: Cone::FullPsd,
        },
        None,
        &FeasibilityConfig::default(),
    );
    let engine_ok = engine.gamma().is_some_and(|g| g.validate(&prob, 1e-9).valid);
    let mut ms = vec![Mat::identity(2)];
    let mut rng = CounterRng::new(404);
    for k in 0..200 {
        let x = rng.uniform_in(-10.0, 10.0);
        let m = match k % 4 {
            0 => Mat::from_f64(&[&[1.0, x], &[0.0, 1.0]]),
            1 => Mat::from_f64(&[&[0.0, 1.0], &[1.0, x]]),
            2 => {
                // rescaled rows of the first family
                let (l1, l2) = (rng.uniform_in(0.2, 5.0), rng.uniform_in(-5.0, -0.2));
                Mat::from_f64(&[&[l1, l1 * x], &[0.0, l2]])
            }
            _ => loop {
                let m = Mat::from_fn(2, 2, |_, _| rng.normal());
                let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
                if det.abs() > 0.1 {
                    break m;
                }
            },
        };
        ms.push(m);
    }
    let not_failing = ms
        .iter()
        .filter(|m| !check_correl_with(&prob, m, 1e-9).is_ok_and(|v| v.is_fails()))
        .count();
    let found = find_correl_certificate(&prob, &cfg);
    check(
        known_ok && inecov.is_holds() && engine_ok && not_failing == 0 && found.status == Status::Unknown,
        format!(
            "closed-form Gamma valid: {known_ok}, inecov: {}, engine witness: {engine_ok} ({} iterations), correl fails for {}/{} M, search: {}",
            inecov.status.as_str(),
            engine.iterations,
            ms.len() - not_failing,
            ms.len(),
            found.status.as_str()
        ),
    )
}

fn pair_min(g: &SymMat<f64>, i: usize, j: usize) -> f64 {
    let idx = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1];
    eigh(&SymMat::from_upper(4, |r, c| g[(idx[r], idx[c])])).min()
}

fn c5_example3_gap() -> Outcome {
    let g = example3_gamma(17.0 / 3.0, 1.0);
    let pairs = [(0, 1), (0, 2), (1, 2)].map(|(i, j)| pair_min(&g, i, j));
    let pairs_ok = pairs.iter().all(|l| *l >= -1e-9);
    let lmin = eigh(&g).min();
    let (lo, hi) = (17.0 / 3.0, 3.0 + 2.0 * SQRT2);
    let curve: Vec<f64> = (0..20)
        .map(|k| {
            let a = lo + (k as f64 + 0.5) / 20.0 * (hi - lo);
            eigh(&example3_gamma(a, example3_f(a))).min()
        })
        .collect();
    let worst = curve.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        pairs_ok && (lmin + 2.58).abs() <= 0.02 && worst >= -1e-8,
        format!("pair minima {:?}, lambda_min(Gamma(17/3, 1)) = {lmin:.4}, worst on curve {worst:.1e}", pairs.map(|l| format!("{l:.1e}"))),
    )
}

fn c6_chain() -> Outcome {
    let cfg = CheckConfig::default();
    let mut violations = Vec::new();
    let mut counts = BTreeMap::new();
    for k in 0..500u64 {
        let prob = random_problem(606, k);
        let r = chain_report(&prob, &cfg);
        for (name, v) in [("correl", &r.correl), ("inecov", &r.inecov), ("inecovf", &r.inecovf), ("inegsqrt", &r.inegsqrt)] {
            *counts.entry(format!("{name}:{}", v.status.as_str())).or_insert(0) += 1;
        }
        if !r.violations.is_empty() {
            violations.push((k, r.violations.join("; ")));
        }
    }
    check(violations.is_empty(), format!("{} violations {:?}; tallies {counts:?}", violations.len(), violations.first()))
}

fn psd_by_minors(m: &SymMat<f64>, tol: f64) -> bool {
    let d = m.dim();
    (1u32..(1 << d)).all(|mask| {
        let idx: Vec<usize> = (0..d).filter(|k| mask & (1 << k) != 0).collect();
        let sub = Mat::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])]);
        det(&sub) >= -tol
    })
}

fn det(m: &Mat<f64>) -> f64 {
    match m.rows() {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => (0..m.rows())
            .map(|c| {
                let minor = Mat::from_fn(m.rows() - 1, m.rows() - 1, |r, k| m[(r + 1, if k < c { k } else { k + 1 })]);
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[(0, c)] * det(&minor)
            })
            .sum(),
    }
}

fn c7_reverse_dominance() -> Outcome {
    let mut mismatch = 0;
    let mut missing_violation = 0;
    let mut fails = 0;
    for k in 0..500u64 {
        let mut rng = CounterRng::stream(707, k);
        let d = 1 + rng.below(3);
        let n = 2 + rng.below(3);
        let target = random_psd(&mut rng, d, d).add(&SymMat::identity(d).scale(0.5));
        let mut covs = Vec::with_capacity(n);
        for _ in 0..n {
            let c = match rng.below(3) {
                0 => target.clone(),
                1 => target.sub(&random_psd(&mut rng, d, 1).scale(0.1)),
                _ => {
                    let s = rng.uniform_in(0.2, 1.5);
                    random_psd(&mut rng, d, d).scale(s)
                }
            };
            covs.push(if eigh(&c).min() < 0.0 { random_psd(&mut rng, d, d).scale(0.05) } else { c });
        }
        let p = random_weights(&mut rng, n);
        let prob = MixtureProblem::centered(p.clone(), covs.clone(), target.clone()).unwrap();
        let oracle = covs.iter().all(|c| psd_by_minors(&target.sub(c), 1e-9));
        let v = check_dominated_by_single(&prob, 1e-9).unwrap();
        if v.is_holds() != oracle {
            mismatch += 1;
        }
        if v.is_fails() {
            fails += 1;
            let t = test_mixture_dominated(&prob).unwrap();
            let confirmed = match &t.witness {
                Some(Witness::TestFunction { label, .. }) if t.is_fails() => {
                    let (lambda, xi) = parse_exp_label(label);
                    let lhs = 0.5 * lambda * lambda * target.quad_form(&xi);
                    let rhs = covs
                        .iter()
                        .zip(&p)
                        .map(|(c, w)| w * (0.5 * lambda * lambda * c.quad_form(&xi) - lhs).exp())
                        .sum::<f64>();
                    rhs > 1.0
                }
                _ => false,
            };
            if !confirmed {
                missing_violation += 1;
            }
        }
    }
    check(
        mismatch == 0 && missing_violation == 0,
        format!("{mismatch} status mismatches, {fails} fails, {missing_violation} without a closed-form violation"),
    )
}

/// `exp[lambda=L][x, y, ...]`.
fn parse_exp_label(label: &str) -> (f64, Vec<f64>) {
    let rest = label.strip_prefix("exp[lambda=").unwrap();
    let (lam, vec) = rest.split_once(']').unwrap();
    let xi = vec
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(',')
        .map(|s| s.trim().parse().unwrap())
        .collect();
    (lam.parse().unwrap(), xi)
}

fn moment_check(kernel: &MartingaleKernel<f64>, samples: usize, seed: u64) -> (f64, usize) {
    let prob = kernel.problem();
    let d = prob.d();
    let draws = kernel.sample_batch(samples, seed);
    let nf = samples as f64;
    let mut worst: f64 = 0.0;
    let mut tests = 0;
    let mut z = |vals: &mut dyn Iterator<Item = f64>, expected: f64| {
        let (mut s, mut sq) = (0.0, 0.0);
        for v in vals {
            s += v;
            sq += v * v;
        }
        let mean = s / nf;
        let se = ((sq / nf - mean * mean).max(0.0) / nf).sqrt().max(1e-300);
        worst = worst.max((mean - expected).abs() / se);
        tests += 1;
    };
    let mix = prob
        .covs()
        .iter()
        .zip(prob.weights())
        .fold(SymMat::zeros(d), |acc, (c, w)| acc.add(&c.scale(*w)));
    for r in 0..d {
        for c in r..d {
            z(&mut draws.iter().map(|s| s.y[r] * s.y[c]), mix[(r, c)]);
        }
    }
    for r in 0..d {
        z(&mut draws.iter().map(|s| s.y[r] - s.x[r]), 0.0);
        for k in 0..d {
            z(&mut draws.iter().map(|s| (s.y[r] - s.x[r]) * s.x[k]), 0.0);
            for l in k..d {
                z(&mut draws.iter().map(|s| (s.y[r] - s.x[r]) * s.x[k] * s.x[l]), 0.0);
            }
        }
    }
    (worst, tests)
}

fn c8_martingale() -> Outcome {
    let ex1 = example1(0.0);
    let g1 = GammaWitness::new(2, 2, example1_gamma(0.0)).unwrap();
    let ex2 = example2(5.0, 0.5).unwrap();
    let out = solve(
        &FeasibilityTask {
            problem: &ex2,
            cone: Cone::FullPsd,
        },
        None,
        &FeasibilityConfig::default(),
    );
    let Some(g2) = out.gamma().cloned() else {
        return check(false, "engine found no witness on Example 2 (5, 0.5)");
    };
    let (w1, t1) = moment_check(&MartingaleKernel::build(&ex1, &g1).unwrap(), 100_000, 8);
    let (w2, t2) = moment_check(&MartingaleKernel::build(&ex2, &g2).unwrap(), 100_000, 9);
    check(
        w1 <= 4.0 && w2 <= 4.0,
        format!("largest |z| {w1:.2} over {t1} moments (Example 1), {w2:.2} over {t2} (Example 2)"),
    )
}

fn c9_orthogonal_factors() -> Outcome {
    let mut bad = Vec::new();
    let mut worst_orth: f64 = 0.0;
    let mut worst_dom = f64::INFINITY;
    for k in 0..100u64 {
        let mut rng = CounterRng::stream(909, k);
        let d = 1 + rng.below(3);
        let n = 2 + rng.below(2);
        let gamma = random_psd(&mut rng, n * d, n * d);
        let p = random_weights(&mut rng, n);
        let covs: Vec<SymMat<f64>> = (0..n)
            .map(|i| SymMat::from_upper(d, |r, c| gamma[(i * d + r, i * d + c)]))
            .collect();
        let probe = MixtureProblem::centered(p.clone(), covs.clone(), SymMat::identity(d)).unwrap();
        let target = probe.a_gamma_at(gamma.as_mat()).scale(rng.uniform_in(0.3, 1.0));
        let prob = probe.with_target(target.clone()).unwrap();
        let g = GammaWitness::new(n, d, gamma).unwrap();
        let f = orthogonal_factors_from_gamma(&prob, &g, n * d).unwrap();
        let orth = f
            .o
            .iter()
            .map(|o| (&o.mul_t(o) - &Mat::identity(n * d)).frobenius())
            .fold(0.0, f64::max);
        let roots: Vec<Mat<f64>> = covs.iter().map(|c| eigh(c).apply(|l| l.max(0.0).sqrt()).into_mat()).collect();
        let mut comb = Mat::zeros(d, n * d);
        for i in 0..n {
            let sigma = roots[i].resized(d, n * d);
            comb = &comb + &sigma.matmul(&f.o[i]).scale(p[i]);
        }
        let dom = eigh(&SymMat::symmetrize(&comb.mul_t(&comb)).sub(&target)).min();
        worst_orth = worst_orth.max(orth);
        worst_dom = worst_dom.min(dom);
        if orth > 1e-8 || dom < -1e-7 {
            bad.push(k);
        }
    }
    check(
        bad.is_empty(),
        format!("max |O O^T - I|_F = {worst_orth:.1e}, min lambda = {worst_dom:.1e}, failures {bad:?}"),
    )
}

fn c10_exp_minimizer() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..100u64 {
        let mut rng = CounterRng::stream(1010, k);
        let lambda = rng.uniform_in(-3.0, 3.0);
        let p1 = rng.uniform_in(0.05, 0.95);
        let s1 = rng.uniform_in(0.1, 3.0);
        let s2 = rng.uniform_in(0.1, 3.0);
        let err = (exp_two_point_search(lambda, p1, s1, s2) - exp_two_point_argmin(lambda, p1, s1, s2)).abs();
        worst = worst.max(err);
    }
    check(worst <= 1e-8, format!("max |numeric - closed form| = {worst:.1e}"))
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 scalar equivalence", c1_scalar_equivalence, Duration::from_secs(10)),
        ("2 Example 2 region", c2_example2_region, Duration::from_secs(300)),
        ("3 thresholds by bisection", c3_thresholds, Duration::from_secs(30)),
        ("4 Example 1 separation", c4_example1_separation, Duration::from_secs(30)),
        ("5 Example 3 pairwise gap", c5_example3_gap, Duration::from_secs(10)),
        ("6 implication chain", c6_chain, Duration::from_secs(300)),
        ("7 reverse dominance", c7_reverse_dominance, Duration::from_secs(60)),
        ("8 martingale coupling", c8_martingale, Duration::from_secs(120)),
        ("9 orthogonal factors", c9_orthogonal_factors, Duration::from_secs(60)),
        ("10 exponential minimizer", c10_exp_minimizer, Duration::from_secs(5)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.starts_with(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let out = run();
        let took = t.elapsed();
        let ok = out.ok && took <= budget;
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.1}s of {}s]",
            if ok { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
