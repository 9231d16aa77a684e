//! Dense symmetric matrix algebra at small dimension.

mod jacobi;
mod mat;
mod ops;
mod serde_impl;
mod sym;

pub use jacobi::{eigh, SpectralDecomp};
pub use mat::{dot, norm, Mat};
pub use ops::{
    cholesky_lower, condition_number, correlation_of, inverse, is_psd, pinv_psd, pinv_sqrt_psd, polar_factor,
    psd_part, psd_slack, schur_complement, solve, sqrt_psd, CorrelationOf, PsdCheck,
};
pub use sym::SymMat;
