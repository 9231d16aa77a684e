//! Two-parameter region maps and one-parameter threshold bisection over
//! problem templates whose entries are expressions in the parameters.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use evalexpr::{ContextWithMutableFunctions, ContextWithMutableVariables, Function, HashMapContext, Value};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::{
    check_correl_with, check_dominated_by_single, check_inecov, check_inecovf, check_inegsqrt,
    find_correl_certificate, CheckConfig,
};
use crate::error::{Error, Result};
use crate::matcore::{Mat, SymMat};
use crate::problem::MixtureProblem;
use crate::verdict::{Status, Verdict};

/// A number, or an expression over the sweep parameters and `pi`.
/// `sqrt`, `abs`, `pow`, `ln` and `exp` are available unqualified, as are
/// the `math::` builtins of `evalexpr`. Integer literals are read as reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Number(f64),
    Expr(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentTemplate {
    pub cov: Vec<Vec<Entry>>,
    #[serde(default)]
    pub mean: Option<Vec<Entry>>,
}

/// Problem whose weights, covariances and means may depend on parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemTemplate {
    pub p: Vec<Entry>,
    pub components: Vec<ComponentTemplate>,
    pub target: Vec<Vec<Entry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Axis {
    /// `min + k step` for every `k` that stays within `max` (up to `1e-9` steps).
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.min + k as f64 * self.step).collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.min.is_finite() || !self.max.is_finite() || self.max < self.min {
            return Err(Error::InvalidSpec(format!("axis {} has an invalid range or step", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Checker {
    Inegsqrt,
    Inecov,
    Inecovf,
    /// Certificate search over the generated transforms.
    Correl,
    /// Condition (2) with `M = I`.
    CorrelIdentity,
    Dominates,
}

impl Checker {
    pub fn as_str(self) -> &'static str {
        match self {
            Checker::Inegsqrt => "inegsqrt",
            Checker::Inecov => "inecov",
            Checker::Inecovf => "inecovf",
            Checker::Correl => "correl",
            Checker::CorrelIdentity => "correl_identity",
            Checker::Dominates => "dominates",
        }
    }

    pub fn run(self, prob: &MixtureProblem<f64>, cfg: &CheckConfig<f64>) -> Result<Verdict<f64>> {
        Ok(match self {
            Checker::Inegsqrt => check_inegsqrt(prob, cfg),
            Checker::Inecov => check_inecov(prob, cfg),
            Checker::Inecovf => check_inecovf(prob, cfg),
            Checker::Correl => find_correl_certificate(prob, cfg),
            Checker::CorrelIdentity => check_correl_with(prob, &Mat::identity(prob.d()), cfg.eps_psd)?,
            Checker::Dominates => check_dominated_by_single(prob, cfg.eps_psd)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub template: ProblemTemplate,
    pub axes: [Axis; 2],
    pub checkers: Vec<Checker>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl SweepSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.axes.iter().try_for_each(Axis::validate)?;
        if spec.checkers.is_empty() {
            return Err(Error::InvalidSpec("no checkers".into()));
        }
        Ok(spec)
    }
}

/// Outcome of one checker on one cell. `Invalid` marks parameter values for
/// which the template is not a valid problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Holds,
    Fails,
    Unknown,
    Boundary,
    Invalid,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Holds => "holds",
            CellStatus::Fails => "fails",
            CellStatus::Unknown => "unknown",
            CellStatus::Boundary => "boundary",
            CellStatus::Invalid => "invalid",
        }
    }

    fn of(v: &Verdict<f64>) -> Self {
        if v.boundary {
            return CellStatus::Boundary;
        }
        match v.status {
            Status::Holds => CellStatus::Holds,
            Status::Fails => CellStatus::Fails,
            Status::Unknown => CellStatus::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub checker: Checker,
    pub status: CellStatus,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionCell {
    pub row: usize,
    pub col: usize,
    pub params: (f64, f64),
    pub results: Vec<CellResult>,
}

/// Integer literals get a fractional part so that `17/3` divides as reals.
fn as_real_literals(expr: &str) -> String {
    let chars: Vec<char> = expr.chars().collect();
    let mut out = String::with_capacity(expr.len() + 8);
    let mut k = 0;
    while k < chars.len() {
        let c = chars[k];
        let starts_token = k == 0 || !(chars[k - 1].is_alphanumeric() || chars[k - 1] == '_' || chars[k - 1] == '.');
        if c.is_ascii_digit() && starts_token {
            let start = k;
            while k < chars.len() && (chars[k].is_ascii_alphanumeric() || chars[k] == '.' || chars[k] == '_') {
                k += 1;
            }
            let tok: String = chars[start..k].iter().collect();
            out.push_str(&tok);
            let exp_sign = tok.ends_with('e') || tok.ends_with('E');
            if !tok.contains('.') && !tok.contains('e') && !tok.contains('E') {
                out.push_str(".0");
            } else if exp_sign && k < chars.len() && (chars[k] == '-' || chars[k] == '+') {
                out.push(chars[k]);
                k += 1;
                while k < chars.len() && chars[k].is_ascii_digit() {
                    out.push(chars[k]);
                    k += 1;
                }
            }
            continue;
        }
        out.push(c);
        k += 1;
    }
    out
}

fn context(params: &BTreeMap<String, f64>) -> Result<HashMapContext> {
    let mut ctx = HashMapContext::new();
    let err = |e: evalexpr::EvalexprError| Error::InvalidSpec(e.to_string());
    ctx.set_value("pi".into(), Value::Float(std::f64::consts::PI)).map_err(err)?;
    for (k, v) in params {
        ctx.set_value(k.clone(), Value::Float(*v)).map_err(err)?;
    }
    let unary = |f: fn(f64) -> f64| Function::new(move |a| Ok(Value::Float(f(a.as_number()?))));
    ctx.set_function("sqrt".into(), unary(f64::sqrt)).map_err(err)?;
    ctx.set_function("abs".into(), unary(f64::abs)).map_err(err)?;
    ctx.set_function("ln".into(), unary(f64::ln)).map_err(err)?;
    ctx.set_function("exp".into(), unary(f64::exp)).map_err(err)?;
    ctx.set_function(
        "pow".into(),
        Function::new(|a| {
            let t = a.as_fixed_len_tuple(2)?;
            Ok(Value::Float(t[0].as_number()?.powf(t[1].as_number()?)))
        }),
    )
    .map_err(err)?;
    Ok(ctx)
}

fn eval(e: &Entry, ctx: &HashMapContext) -> Result<f64> {
    match e {
        Entry::Number(x) => Ok(*x),
        Entry::Expr(s) => evalexpr::eval_number_with_context(&as_real_literals(s), ctx)
            .map_err(|err| Error::InvalidSpec(format!("{s}: {err}"))),
    }
}

fn eval_matrix(rows: &[Vec<Entry>], ctx: &HashMapContext) -> Result<Mat<f64>> {
    let vals = rows
        .iter()
        .map(|r| r.iter().map(|e| eval(e, ctx)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    Mat::from_rows(&vals)
}

impl ProblemTemplate {
    /// The problem at the given parameter values; symmetry is enforced to `1e-12`.
    pub fn instantiate(&self, params: &BTreeMap<String, f64>) -> Result<MixtureProblem<f64>> {
        let ctx = context(params)?;
        let p = self.p.iter().map(|e| eval(e, &ctx)).collect::<Result<Vec<_>>>()?;
        let sym = |m: Mat<f64>| SymMat::from_mat(&m, 1e-12);
        let target = sym(eval_matrix(&self.target, &ctx)?)?;
        let mut covs = Vec::new();
        let mut means = Vec::new();
        for c in &self.components {
            covs.push(sym(eval_matrix(&c.cov, &ctx)?)?);
            means.push(match &c.mean {
                Some(m) => m.iter().map(|e| eval(e, &ctx)).collect::<Result<Vec<_>>>()?,
                None => vec![0.0; target.dim()],
            });
        }
        MixtureProblem::new(p, means, covs, target)
    }
}

fn evaluate_cell(spec: &SweepSpec, row: usize, col: usize, x: f64, y: f64) -> RegionCell {
    let params: BTreeMap<String, f64> = [(spec.axes[0].name.clone(), x), (spec.axes[1].name.clone(), y)].into();
    let cfg = CheckConfig::default().with_seed(spec.seed);
    let prob = spec.template.instantiate(&params);
    let results = spec
        .checkers
        .iter()
        .map(|c| match prob.as_ref().map_err(Clone::clone).and_then(|p| c.run(p, &cfg)) {
            Ok(v) => CellResult {
                checker: *c,
                status: CellStatus::of(&v),
                margin: v.margin,
            },
            Err(_) => CellResult {
                checker: *c,
                status: CellStatus::Invalid,
                margin: f64::NAN,
            },
        })
        .collect();
    RegionCell {
        row,
        col,
        params: (x, y),
        results,
    }
}

/// Evaluates every checker on every grid cell, ordered by `(row, col)`.
/// Writes the CSV to `spec.out` when it is set.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<RegionCell>> {
    spec.axes.iter().try_for_each(Axis::validate)?;
    let xs = spec.axes[0].values();
    let ys = spec.axes[1].values();
    let jobs: Vec<(usize, usize)> = (0..xs.len()).flat_map(|r| (0..ys.len()).map(move |c| (r, c))).collect();
    let cells: Vec<RegionCell> = jobs
        .par_iter()
        .map(|&(r, c)| evaluate_cell(spec, r, c, xs[r], ys[c]))
        .collect();
    if let Some(path) = &spec.out {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_csv(&cells, &mut f)?;
        f.flush()?;
    }
    Ok(cells)
}

/// `param1,param2,checker,status,margin`, one line per cell and checker.
pub fn write_csv(cells: &[RegionCell], w: &mut impl Write) -> Result<()> {
    writeln!(w, "param1,param2,checker,status,margin")?;
    for cell in cells {
        for r in &cell.results {
            writeln!(
                w,
                "{},{},{},{},{}",
                cell.params.0,
                cell.params.1,
                r.checker.as_str(),
                r.status.as_str(),
                r.margin
            )?;
        }
    }
    Ok(())
}

pub fn to_csv(cells: &[RegionCell]) -> String {
    let mut buf = Vec::new();
    write_csv(cells, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Threshold of `param` between `bracket.0` and `bracket.1` where `checker`
/// switches between `Holds` and anything else, to absolute accuracy `tol`.
/// Other parameters are held at `fixed`. The verdict is assumed monotone.
pub fn boundary_bisect(
    template: &ProblemTemplate,
    param: &str,
    fixed: &BTreeMap<String, f64>,
    checker: Checker,
    bracket: (f64, f64),
    tol: f64,
    cfg: &CheckConfig<f64>,
) -> Result<f64> {
    let holds = |x: f64| -> bool {
        let mut params = fixed.clone();
        params.insert(param.to_string(), x);
        template
            .instantiate(&params)
            .and_then(|p| checker.run(&p, cfg))
            .is_ok_and(|v| v.is_holds())
    };
    let (mut lo, mut hi) = bracket;
    let (h_lo, h_hi) = (holds(lo), holds(hi));
    if h_lo == h_hi {
        return Err(Error::BracketNotSeparating(format!(
            "{} is {} at both {lo} and {hi}",
            checker.as_str(),
            if h_lo { "holds" } else { "not holds" }
        )));
    }
    while (hi - lo).abs() > tol {
        let mid = 0.5 * (lo + hi);
        if holds(mid) == h_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
