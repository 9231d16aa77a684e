//! `gmcvx` command-line front end.

pub mod commands;
pub mod files;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

/// Process exit codes.
pub mod exit {
    pub const HOLDS: i32 = 0;
    pub const FAILS: i32 = 1;
    pub const UNKNOWN: i32 = 2;
    pub const MALFORMED: i32 = 64;
    pub const INVARIANT: i32 = 65;
    pub const IO: i32 = 66;
    pub const INTERNAL: i32 = 70;
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Unparseable input or bad usage.
    Malformed(String),
    /// Input parsed but violates a problem invariant.
    Invariant(String),
    Io(String),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Malformed(_) => exit::MALFORMED,
            CliError::Invariant(_) => exit::INVARIANT,
            CliError::Io(_) => exit::IO,
            CliError::Internal(_) => exit::INTERNAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Malformed(m) => write!(f, "malformed input: {m}"),
            CliError::Invariant(m) => write!(f, "invalid input: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<gmcvx_core::Error> for CliError {
    fn from(e: gmcvx_core::Error) -> Self {
        use gmcvx_core::Error as E;
        match e {
            E::Io(m) => CliError::Io(m),
            E::ChainViolation(_) => CliError::Internal(e.to_string()),
            _ => CliError::Invariant(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gmcvx", version, about = "Convex order between a Gaussian and a Gaussian mixture")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Condition {
    Inegsqrt,
    Inecov,
    Inecovf,
    Correl,
    Dominates,
    Chain,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Inegsqrt => "inegsqrt",
            Condition::Inecov => "inecov",
            Condition::Inecovf => "inecovf",
            Condition::Correl => "correl",
            Condition::Dominates => "dominates",
            Condition::Chain => "chain",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide one condition and print a JSON report.
    Check {
        #[arg(long, value_enum)]
        condition: Condition,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the certificate of a Holds verdict here.
        #[arg(long)]
        emit_certificate: Option<PathBuf>,
        /// Transform(s) for `correl`: one matrix, or a list tried in order.
        #[arg(long = "with-M")]
        with_m: Option<PathBuf>,
    },
    /// Re-validate a saved certificate against a problem.
    Verify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        certificate: PathBuf,
    },
    /// Evaluate checkers over a two-parameter grid and write a region CSV.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample the martingale coupling of a certificate.
    Couple {
        #[arg(long)]
        input: PathBuf,
        /// Certificate file or a bare Gamma matrix.
        #[arg(long)]
        gamma: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare both sides on a suite of convex test functions.
    Mcverify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Honors `GMCVX_THREADS`; a bad value is a usage error.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("GMCVX_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Malformed(format!("GMCVX_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

/// Runs a parsed command, writing the report to `out`; returns the exit code.
pub fn run(cli: Cli, out: &mut impl std::io::Write) -> Result<i32, CliError> {
    let (report, code) = match cli.command {
        Command::Check {
            condition,
            input,
            tol,
            seed,
            emit_certificate,
            with_m,
        } => commands::check(condition, &input, tol, seed, emit_certificate.as_deref(), with_m.as_deref())?,
        Command::Verify { input, certificate } => commands::verify(&input, &certificate)?,
        Command::Sweep { spec, out } => commands::sweep(&spec, &out)?,
        Command::Couple {
            input,
            gamma,
            samples,
            seed,
            out,
        } => commands::couple(&input, &gamma, samples, seed, &out)?,
        Command::Mcverify { input, samples, seed } => commands::mcverify(&input, samples, seed)?,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| CliError::Io(e.to_string()))?;
    Ok(code)
}
