//! On-disk problem and certificate formats.

use std::path::Path;

use gmcvx_core::{CorrelCertificate, GammaWitness, Mat, MixtureProblemF64, SymMat};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentFile {
    pub cov: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub d: usize,
    pub n: usize,
    pub p: Vec<f64>,
    pub target: Vec<Vec<f64>>,
    pub components: Vec<ComponentFile>,
}

fn sym(rows: &[Vec<f64>], what: &str) -> Result<SymMat<f64>, CliError> {
    let m = Mat::from_rows(rows).map_err(|e| CliError::Invariant(format!("{what}: {e}")))?;
    SymMat::from_mat(&m, SYMMETRY_TOL).map_err(|e| CliError::Invariant(format!("{what}: {e}")))
}

impl ProblemFile {
    pub fn from_problem(prob: &MixtureProblemF64) -> Self {
        Self {
            d: prob.d(),
            n: prob.n(),
            p: prob.weights().to_vec(),
            target: prob.target().to_rows(),
            components: prob
                .covs()
                .iter()
                .zip(prob.means())
                .map(|(c, m)| ComponentFile {
                    cov: c.to_rows(),
                    mean: Some(m.clone()),
                })
                .collect(),
        }
    }

    pub fn to_problem(&self) -> Result<MixtureProblemF64, CliError> {
        if self.p.len() != self.n || self.components.len() != self.n {
            return Err(CliError::Invariant(format!(
                "n = {} but {} weights and {} components",
                self.n,
                self.p.len(),
                self.components.len()
            )));
        }
        let target = sym(&self.target, "target")?;
        if target.dim() != self.d {
            return Err(CliError::Invariant(format!("d = {} but target is {}x{}", self.d, target.dim(), target.dim())));
        }
        let mut covs = Vec::with_capacity(self.n);
        let mut means = Vec::with_capacity(self.n);
        for (i, c) in self.components.iter().enumerate() {
            covs.push(sym(&c.cov, &format!("component {i} covariance"))?);
            means.push(c.mean.clone().unwrap_or_else(|| vec![0.0; self.d]));
        }
        Ok(MixtureProblemF64::new(self.p.clone(), means, covs, target)?)
    }
}

/// Validated problem and its input digest.
pub struct LoadedProblem {
    pub problem: MixtureProblemF64,
    pub digest: String,
}

/// SHA-256 of the canonical JSON of the problem (means made explicit).
pub fn problem_digest(prob: &MixtureProblemF64) -> String {
    let canon = serde_json::to_string(&ProblemFile::from_problem(prob)).expect("problem serializes");
    hex(&Sha256::digest(canon.as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))
}

pub fn load_problem(path: &Path) -> Result<LoadedProblem, CliError> {
    let file: ProblemFile = parse_json(&read_text(path)?, path)?;
    let problem = file.to_problem()?;
    let digest = problem_digest(&problem);
    Ok(LoadedProblem { problem, digest })
}

/// A single matrix or a list of matrices.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MatrixList {
    One(Vec<Vec<f64>>),
    Many(Vec<Vec<Vec<f64>>>),
}

pub fn load_matrices(path: &Path) -> Result<Vec<Mat<f64>>, CliError> {
    let rows = match parse_json::<MatrixList>(&read_text(path)?, path)? {
        MatrixList::One(m) => vec![m],
        MatrixList::Many(ms) => ms,
    };
    rows.iter()
        .map(|m| Mat::from_rows(m).map_err(|e| CliError::Invariant(format!("{}: {e}", path.display()))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerancesUsed {
    pub tol: f64,
    pub eps_psd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Gamma { n: usize, d: usize, gamma: Vec<Vec<f64>> },
    Correl { m: Vec<Vec<f64>>, c: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub payload: Payload,
    pub tolerances: TolerancesUsed,
    pub tool_version: String,
    pub input_digest: String,
}

impl CertificateFile {
    pub fn gamma(w: &GammaWitness<f64>, tolerances: TolerancesUsed, digest: &str) -> Self {
        Self::new(
            Payload::Gamma {
                n: w.n(),
                d: w.d(),
                gamma: w.gamma().to_rows(),
            },
            tolerances,
            digest,
        )
    }

    pub fn correl(c: &CorrelCertificate<f64>, tolerances: TolerancesUsed, digest: &str) -> Self {
        Self::new(
            Payload::Correl {
                m: c.m.to_rows(),
                c: c.c.to_rows(),
            },
            tolerances,
            digest,
        )
    }

    fn new(payload: Payload, tolerances: TolerancesUsed, digest: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            payload,
            tolerances,
            tool_version: TOOL_VERSION.to_string(),
            input_digest: digest.to_string(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let cert: Self = parse_json(&read_text(path)?, path)?;
        if cert.schema_version != SCHEMA_VERSION {
            return Err(CliError::Invariant(format!("unsupported certificate schema {}", cert.schema_version)));
        }
        Ok(cert)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("certificate serializes");
        text.push('\n');
        write_text(path, &text)
    }

    pub fn gamma_witness(&self) -> Result<Option<GammaWitness<f64>>, CliError> {
        match &self.payload {
            Payload::Gamma { n, d, gamma } => Ok(Some(GammaWitness::new(*n, *d, sym(gamma, "gamma")?)?)),
            Payload::Correl { .. } => Ok(None),
        }
    }
}
