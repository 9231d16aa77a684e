use serde::Serialize;

use super::{check_inecov, check_inecovf, check_inegsqrt, find_correl_certificate, CheckConfig};
use crate::cxverify::{default_suite, test_convex_order, Gaussian, GaussianMixture, McConfig};
use crate::error::{Error, Result};
use crate::problem::MixtureProblem;
use crate::verdict::{Status, Verdict, Witness};

/// Relative margin below which a `Fails` at a weaker level counts against a `Holds` above it.
pub const CHAIN_TOL: f64 = 1e-7;

/// Verdicts for the conditions ordered from strongest to weakest.
#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub correl: Verdict<f64>,
    pub inecov: Verdict<f64>,
    /// Convex order against a finite test suite, evidence only.
    pub convex_order: Verdict<f64>,
    pub inecovf: Verdict<f64>,
    pub inegsqrt: Verdict<f64>,
    pub violations: Vec<String>,
}

fn firm_fail(v: &Verdict<f64>, unit: f64) -> bool {
    v.status == Status::Fails && v.margin < -CHAIN_TOL * unit
}

/// A suite violation found by Monte Carlo alone is not held against the chain.
fn exact_suite_fail(v: &Verdict<f64>) -> bool {
    match &v.witness {
        Some(Witness::TestFunction { label, .. }) => v.is_fails() && !label.starts_with("max_affine"),
        _ => false,
    }
}

/// Runs every checker and reports the implications of the chain that the
/// verdicts contradict. Unknown verdicts never contradict anything.
pub fn chain_report(prob: &MixtureProblem<f64>, cfg: &CheckConfig<f64>) -> ChainReport {
    let scale = prob.scale();
    let correl = find_correl_certificate(prob, cfg);
    let inecov = check_inecov(prob, cfg);
    let lhs = Gaussian::centered(prob.target().clone());
    let mut mix = GaussianMixture::from_problem(prob);
    if !prob.is_centered() {
        mix.components.iter_mut().for_each(|c| c.mean.iter_mut().for_each(|x| *x = 0.0));
    }
    let suite = default_suite(&lhs, &mix, cfg.seed);
    let convex_order = test_convex_order(
        &lhs,
        &mix,
        &suite,
        &McConfig {
            samples: 20_000,
            seed: cfg.seed,
        },
    );
    let mut fcfg = cfg.clone();
    if let Some(g) = inecov.gamma() {
        fcfg.extra_gammas.push(g.clone());
    }
    let inecovf = check_inecovf(prob, &fcfg);
    let inegsqrt = check_inegsqrt(prob, cfg);

    let mut violations = Vec::new();
    let levels: [(&str, &Verdict<f64>, f64); 4] = [
        ("correl", &correl, scale),
        ("inecov", &inecov, scale),
        ("inecovf", &inecovf, scale),
        ("inegsqrt", &inegsqrt, scale.sqrt()),
    ];
    for (a, (na, va, _)) in levels.iter().enumerate() {
        if !va.is_holds() {
            continue;
        }
        for (nb, vb, unit) in &levels[a + 1..] {
            if firm_fail(vb, *unit) {
                violations.push(format!("{na} holds but {nb} fails with margin {:e}", vb.margin));
            }
        }
        if a <= 1 && exact_suite_fail(&convex_order) {
            violations.push(format!("{na} holds but a closed-form convex test function is violated"));
        }
    }
    ChainReport {
        correl,
        inecov,
        convex_order,
        inecovf,
        inegsqrt,
        violations,
    }
}

/// [`chain_report`], with any contradiction raised as [`Error::ChainViolation`].
pub fn implication_chain_report(prob: &MixtureProblem<f64>, cfg: &CheckConfig<f64>) -> Result<ChainReport> {
    let r = chain_report(prob, cfg);
    if r.violations.is_empty() {
        Ok(r)
    } else {
        Err(Error::ChainViolation(r.violations.join("; ")))
    }
}
