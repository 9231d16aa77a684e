//! Convex order between a centered Gaussian and a finite Gaussian mixture.

pub mod conditions;
pub mod coupling;
pub mod cxverify;
pub mod error;
pub mod matcore;
pub mod problem;
pub mod psdfeas;
pub mod rng;
pub mod scalar;
pub mod search;
pub mod sweep;
pub mod verdict;

pub use error::{Error, Result};
pub use matcore::{Mat, SymMat};
pub use problem::MixtureProblem;
pub use scalar::{Scalar, Tolerances};
pub use verdict::{CorrelCertificate, Diagnostics, GammaCheck, GammaWitness, Status, Verdict, Witness};

pub type MatF64 = Mat<f64>;
pub type SymMatF64 = SymMat<f64>;
pub type MatF32 = Mat<f32>;
pub type SymMatF32 = SymMat<f32>;
pub type MixtureProblemF64 = MixtureProblem<f64>;
pub type MixtureProblemF32 = MixtureProblem<f32>;
pub type GammaWitnessF64 = GammaWitness<f64>;
pub type VerdictF64 = Verdict<f64>;
