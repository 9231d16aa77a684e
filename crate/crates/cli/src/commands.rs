use std::io::Write;
use std::path::Path;

use gmcvx_core::conditions::{
    chain_report, check_correl_with, check_inecov, check_inecovf, check_inegsqrt, find_correl_certificate, CheckConfig,
};
use gmcvx_core::coupling::{CouplingSample, MartingaleKernel};
use gmcvx_core::cxverify::{default_suite, test_convex_order, test_mixture_dominated, Gaussian, GaussianMixture, McConfig};
use gmcvx_core::matcore::inverse;
use gmcvx_core::sweep::{run_sweep, SweepSpec};
use gmcvx_core::{GammaWitness, MixtureProblemF64, Status, SymMat, VerdictF64};
use serde_json::{json, Value};

use crate::files::{self, CertificateFile, LoadedProblem, Payload, TolerancesUsed, SCHEMA_VERSION};
use crate::{exit, CliError, Condition};

/// `|z|` above this fails the coupling diagnostics.
pub const Z_LIMIT: f64 = 4.0;

pub fn status_code(s: Status) -> i32 {
    match s {
        Status::Holds => exit::HOLDS,
        Status::Fails => exit::FAILS,
        Status::Unknown => exit::UNKNOWN,
    }
}

fn header(command: &str) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    m.insert("tool_version".into(), json!(files::TOOL_VERSION));
    m.insert("command".into(), json!(command));
    m
}

fn verdict_json(v: &VerdictF64) -> Value {
    json!({
        "status": v.status.as_str(),
        "margin": v.margin,
        "boundary": v.boundary,
        "evidence_only": v.evidence_only,
        "witness": v.witness,
        "diagnostics": v.diagnostics,
    })
}

fn tolerances(cfg: &CheckConfig<f64>) -> TolerancesUsed {
    TolerancesUsed {
        tol: cfg.tol,
        eps_psd: cfg.eps_psd,
    }
}

/// Status and margin of a certificate re-validated against `prob`.
pub fn certificate_verdict(prob: &MixtureProblemF64, cert: &CertificateFile) -> Result<(Status, f64), CliError> {
    let eps = cert.tolerances.eps_psd;
    match &cert.payload {
        Payload::Gamma { .. } => {
            let w = cert.gamma_witness()?.expect("gamma payload");
            if w.n() != prob.n() || w.d() != prob.d() {
                return Err(CliError::Invariant(format!(
                    "certificate is for n = {}, d = {} but the problem has n = {}, d = {}",
                    w.n(),
                    w.d(),
                    prob.n(),
                    prob.d()
                )));
            }
            let chk = w.validate(prob, eps);
            let status = if chk.valid { Status::Holds } else { Status::Fails };
            Ok((status, chk.dominance_lambda_min))
        }
        Payload::Correl { m, .. } => {
            let m = gmcvx_core::Mat::from_rows(m)?;
            let v = check_correl_with(prob, &m, eps)?;
            Ok((v.status, v.margin))
        }
    }
}

fn run_condition(
    condition: Condition,
    prob: &MixtureProblemF64,
    cfg: &mut CheckConfig<f64>,
    with_m: Option<&Path>,
) -> Result<VerdictF64, CliError> {
    Ok(match condition {
        Condition::Inegsqrt => check_inegsqrt(prob, cfg),
        Condition::Inecov => check_inecov(prob, cfg),
        Condition::Inecovf => check_inecovf(prob, cfg),
        Condition::Correl => match with_m.map(files::load_matrices).transpose()? {
            Some(ms) if ms.len() == 1 => check_correl_with(prob, &ms[0], cfg.eps_psd)?,
            Some(ms) => {
                cfg.extra_m = ms;
                find_correl_certificate(prob, cfg)
            }
            None => find_correl_certificate(prob, cfg),
        },
        Condition::Dominates => test_mixture_dominated(prob)?,
        Condition::Chain => unreachable!("chain is reported separately"),
    })
}

pub fn check(
    condition: Condition,
    input: &Path,
    tol: Option<f64>,
    seed: u64,
    emit: Option<&Path>,
    with_m: Option<&Path>,
) -> Result<(Value, i32), CliError> {
    let LoadedProblem { problem, digest } = files::load_problem(input)?;
    let mut cfg = CheckConfig::default().with_seed(seed);
    if let Some(t) = tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Malformed(format!("--tol must be positive, got {t}")));
        }
        cfg.tol = t;
    }
    let mut report = header("check");
    report.insert("condition".into(), json!(condition.as_str()));
    report.insert("input_digest".into(), json!(digest));
    report.insert("seed".into(), json!(seed));
    report.insert("tolerances".into(), json!(tolerances(&cfg)));

    if condition == Condition::Chain {
        let r = chain_report(&problem, &cfg);
        let code = if r.violations.is_empty() { exit::HOLDS } else { exit::INTERNAL };
        report.insert("consistent".into(), json!(r.violations.is_empty()));
        report.insert(
            "levels".into(),
            json!({
                "correl": verdict_json(&r.correl),
                "inecov": verdict_json(&r.inecov),
                "convex_order": verdict_json(&r.convex_order),
                "inecovf": verdict_json(&r.inecovf),
                "inegsqrt": verdict_json(&r.inegsqrt),
            }),
        );
        report.insert("violations".into(), json!(r.violations));
        return Ok((Value::Object(report), code));
    }

    let v = run_condition(condition, &problem, &mut cfg, with_m)?;
    for (k, val) in verdict_json(&v).as_object().expect("object") {
        report.insert(k.clone(), val.clone());
    }
    let cert = if v.is_holds() {
        if let Some(g) = v.gamma() {
            Some(CertificateFile::gamma(g, tolerances(&cfg), &digest))
        } else {
            v.correl().map(|c| CertificateFile::correl(c, tolerances(&cfg), &digest))
        }
    } else {
        None
    };
    let mut cert_json = Value::Null;
    if let Some(cert) = &cert {
        let (status, margin) = certificate_verdict(&problem, cert)?;
        let mut c = json!({"status": status.as_str(), "margin": margin, "path": Value::Null});
        if let Some(path) = emit {
            cert.save(path)?;
            c["path"] = json!(path.display().to_string());
        }
        cert_json = c;
    } else if emit.is_some() {
        eprintln!("gmcvx: no certificate to emit (status {})", v.status.as_str());
    }
    report.insert("certificate".into(), cert_json);
    Ok((Value::Object(report), status_code(v.status)))
}

pub fn verify(input: &Path, certificate: &Path) -> Result<(Value, i32), CliError> {
    let LoadedProblem { problem, digest } = files::load_problem(input)?;
    let cert = CertificateFile::load(certificate)?;
    if cert.input_digest != digest {
        return Err(CliError::Invariant(format!(
            "certificate digest {} does not match problem digest {digest}",
            cert.input_digest
        )));
    }
    let (status, margin) = certificate_verdict(&problem, &cert)?;
    let mut report = header("verify");
    report.insert("input_digest".into(), json!(digest));
    report.insert(
        "kind".into(),
        json!(match cert.payload {
            Payload::Gamma { .. } => "gamma",
            Payload::Correl { .. } => "correl",
        }),
    );
    report.insert("status".into(), json!(status.as_str()));
    report.insert("margin".into(), json!(margin));
    Ok((Value::Object(report), status_code(status)))
}

pub fn sweep(spec_path: &Path, out: &Path) -> Result<(Value, i32), CliError> {
    let text = files::read_text(spec_path)?;
    files::parse_json::<Value>(&text, spec_path)?;
    let mut spec = SweepSpec::from_json(&text).map_err(|e| CliError::Malformed(e.to_string()))?;
    spec.out = Some(out.to_path_buf());
    let cells = run_sweep(&spec)?;
    let mut counts = serde_json::Map::new();
    for cell in &cells {
        for r in &cell.results {
            let entry = counts
                .entry(r.checker.as_str().to_string())
                .or_insert_with(|| json!({}))
                .as_object_mut()
                .expect("object");
            let n = entry.get(r.status.as_str()).and_then(Value::as_u64).unwrap_or(0);
            entry.insert(r.status.as_str().into(), json!(n + 1));
        }
    }
    let mut report = header("sweep");
    report.insert("cells".into(), json!(cells.len()));
    report.insert("counts".into(), Value::Object(counts));
    report.insert("out".into(), json!(out.display().to_string()));
    Ok((Value::Object(report), exit::HOLDS))
}

fn load_gamma(path: &Path, prob: &MixtureProblemF64, digest: &str) -> Result<GammaWitness<f64>, CliError> {
    let text = files::read_text(path)?;
    let value: Value = files::parse_json(&text, path)?;
    if value.get("kind").is_none() {
        let g: SymMat<f64> = files::parse_json(&text, path)?;
        return Ok(GammaWitness::new(prob.n(), prob.d(), g)?);
    }
    let cert = CertificateFile::load(path)?;
    if cert.input_digest != digest {
        return Err(CliError::Invariant("certificate was issued for a different problem".into()));
    }
    match &cert.payload {
        Payload::Gamma { .. } => Ok(cert.gamma_witness()?.expect("gamma payload")),
        Payload::Correl { m, .. } => {
            let m = gmcvx_core::Mat::from_rows(m)?;
            let v = check_correl_with(prob, &m, cert.tolerances.eps_psd)?;
            let c = v
                .correl()
                .ok_or_else(|| CliError::Invariant(format!("correl certificate does not validate ({})", v.status.as_str())))?;
            Ok(c.gamma(prob.n(), &inverse(&m)?))
        }
    }
}

/// Largest `|z|`-score of the second moments of `y` and of the martingale residuals
/// `E[(y - x) g(x)]` for `g` in `{1, x_k, x_k x_l}`.
pub fn martingale_diagnostics(prob: &MixtureProblemF64, draws: &[CouplingSample<f64>]) -> Value {
    let d = prob.d();
    let nf = draws.len() as f64;
    let z = |vals: &mut dyn Iterator<Item = f64>, expected: f64| {
        let (mut s, mut sq) = (0.0, 0.0);
        for v in vals {
            s += v;
            sq += v * v;
        }
        let mean = s / nf;
        let se = ((sq / nf - mean * mean).max(0.0) / nf).sqrt();
        if se == 0.0 {
            if (mean - expected).abs() <= 1e-12 * (1.0 + expected.abs()) {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (mean - expected) / se
        }
    };
    let mix = prob
        .covs()
        .iter()
        .zip(prob.weights())
        .fold(SymMat::zeros(d), |acc, (c, w)| acc.add(&c.scale(*w)));
    let mut cov_z: f64 = 0.0;
    for r in 0..d {
        for c in r..d {
            cov_z = cov_z.max(z(&mut draws.iter().map(|s| s.y[r] * s.y[c]), mix[(r, c)]).abs());
        }
    }
    let mut mart_z: f64 = 0.0;
    let mut moments = 0;
    for r in 0..d {
        let inc = |s: &CouplingSample<f64>| s.y[r] - s.x[r];
        mart_z = mart_z.max(z(&mut draws.iter().map(inc), 0.0).abs());
        moments += 1;
        for k in 0..d {
            mart_z = mart_z.max(z(&mut draws.iter().map(|s| inc(s) * s.x[k]), 0.0).abs());
            moments += 1;
            for l in k..d {
                mart_z = mart_z.max(z(&mut draws.iter().map(|s| inc(s) * s.x[k] * s.x[l]), 0.0).abs());
                moments += 1;
            }
        }
    }
    json!({
        "samples": draws.len(),
        "covariance_max_abs_z": cov_z,
        "martingale_max_abs_z": mart_z,
        "martingale_moments": moments,
        "z_limit": Z_LIMIT,
        "pass": cov_z <= Z_LIMIT && mart_z <= Z_LIMIT,
    })
}

pub fn couple(input: &Path, gamma: &Path, samples: usize, seed: u64, out: &Path) -> Result<(Value, i32), CliError> {
    let LoadedProblem { problem, digest } = files::load_problem(input)?;
    if samples == 0 {
        return Err(CliError::Malformed("--samples must be positive".into()));
    }
    let w = load_gamma(gamma, &problem, &digest)?;
    let chk = w.validate(&problem, gmcvx_core::Tolerances::<f64>::default().eps_psd);
    if !chk.valid {
        return Err(CliError::Invariant(format!(
            "Gamma does not validate (block residual {:e}, cone {:e}, dominance {:e})",
            chk.block_residual, chk.cone_lambda_min, chk.dominance_lambda_min
        )));
    }
    let kernel = MartingaleKernel::build(&problem, &w)?;
    let draws = kernel.sample_batch(samples, seed);
    write_samples(out, problem.d(), &draws)?;
    let diag = martingale_diagnostics(&problem, &draws);
    let code = if diag["pass"] == json!(true) { exit::HOLDS } else { exit::FAILS };
    let mut report = header("couple");
    report.insert("input_digest".into(), json!(digest));
    report.insert("seed".into(), json!(seed));
    report.insert("out".into(), json!(out.display().to_string()));
    report.insert("diagnostics".into(), diag);
    Ok((Value::Object(report), code))
}

fn write_samples(path: &Path, d: usize, draws: &[CouplingSample<f64>]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let head: Vec<String> = (1..=d)
        .map(|k| format!("x{k}"))
        .chain(std::iter::once("i".to_string()))
        .chain((1..=d).map(|k| format!("y{k}")))
        .collect();
    writeln!(w, "{}", head.join(",")).map_err(io)?;
    for s in draws {
        let row: Vec<String> = s
            .x
            .iter()
            .map(f64::to_string)
            .chain(std::iter::once(s.component.to_string()))
            .chain(s.y.iter().map(f64::to_string))
            .collect();
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn mcverify(input: &Path, samples: usize, seed: u64) -> Result<(Value, i32), CliError> {
    let LoadedProblem { problem, digest } = files::load_problem(input)?;
    if samples < 2 {
        return Err(CliError::Malformed("--samples must be at least 2".into()));
    }
    let lhs = Gaussian::centered(problem.target().clone());
    let rhs = GaussianMixture::from_problem(&problem);
    let suite = default_suite(&lhs, &rhs, seed);
    let v = test_convex_order(&lhs, &rhs, &suite, &McConfig { samples, seed });
    let mut report = header("mcverify");
    report.insert("input_digest".into(), json!(digest));
    report.insert("seed".into(), json!(seed));
    report.insert("samples".into(), json!(samples));
    report.insert("functions".into(), json!(suite.len()));
    for (k, val) in verdict_json(&v).as_object().expect("object") {
        report.insert(k.clone(), val.clone());
    }
    Ok((Value::Object(report), status_code(v.status)))
}
