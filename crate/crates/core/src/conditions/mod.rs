//! Deciding and certifying the four conditions, the pairwise relaxation and
//! the reverse dominance criterion.

mod chain;
mod correl;
mod dominance;
mod factors;
mod inecov;
mod inegsqrt;
mod n2;

pub use chain::{chain_report, implication_chain_report, ChainReport, CHAIN_TOL};
pub use correl::{check_correl_with, find_correl_certificate};
pub use dominance::check_dominated_by_single;
pub use factors::{orthogonal_factors_from_gamma, OrthogonalFactors};
pub use inecov::{check_inecov, check_inecovf, coupling_candidates, dual_gap};
pub use inegsqrt::{alpha_scan, check_inegsqrt, sqrt_gap, AlphaScan};
pub use n2::check_n2_theta;

use crate::matcore::Mat;
use crate::psdfeas::FeasibilityConfig;
use crate::scalar::{Scalar, Tolerances};
use crate::verdict::GammaWitness;

/// Search and tolerance settings shared by the checkers.
#[derive(Debug, Clone)]
pub struct CheckConfig<T> {
    /// `h(ξ) < -tol * sqrt(scale)` on the unit sphere counts as a violation.
    pub tol: T,
    /// Relative PSD slack for certificates.
    pub eps_psd: T,
    pub random_starts: usize,
    /// Subgradient iterations per start.
    pub iterations: usize,
    /// Angular grid size for `d = 2`.
    pub grid_points: usize,
    /// Log-spaced points of the n=2 scan over `α ∈ [1e-6, 1e6]`.
    pub alpha_points: usize,
    pub seed: u64,
    pub feasibility: FeasibilityConfig<T>,
    /// Extra coupling candidates tried before the feasibility engine.
    pub extra_gammas: Vec<GammaWitness<T>>,
    /// Extra transforms tried by `find_correl_certificate`.
    pub extra_m: Vec<Mat<T>>,
}

impl<T: Scalar> Default for CheckConfig<T> {
    fn default() -> Self {
        Self {
            tol: T::c(1e-11).max(T::epsilon() * T::c(64.0)),
            eps_psd: Tolerances::<T>::default().eps_psd,
            random_starts: 64,
            iterations: 200,
            grid_points: 720,
            alpha_points: 400,
            seed: 0,
            feasibility: FeasibilityConfig::default(),
            extra_gammas: Vec::new(),
            extra_m: Vec::new(),
        }
    }
}

impl<T: Scalar> CheckConfig<T> {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
