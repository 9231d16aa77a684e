use crate::error::{Error, Result};
use crate::matcore::{eigh, is_psd};
use crate::problem::MixtureProblem;
use crate::scalar::Scalar;
use crate::verdict::{Verdict, Witness};

/// Reverse order `Σ_i p_i N(0, Σ_i) ≤cx N(0, Σ)`, which holds iff `Σ_i ⪯ Σ`
/// for every `i`. On failure the witness carries the 0-based component index
/// and the eigenvector of the most negative eigenvalue of `Σ - Σ_i`.
pub fn check_dominated_by_single<T: Scalar>(prob: &MixtureProblem<T>, eps: T) -> Result<Verdict<T>> {
    if !prob.all_means_zero() {
        return Err(Error::NonCenteredMeans);
    }
    let mut worst: Option<(usize, T)> = None;
    let mut failing: Option<(usize, T)> = None;
    for (i, c) in prob.covs().iter().enumerate() {
        let diff = prob.target().sub(c);
        let chk = is_psd(&diff, eps)?;
        if worst.is_none_or(|(_, m)| chk.lambda_min < m) {
            worst = Some((i, chk.lambda_min));
        }
        if !chk.is_psd && failing.is_none_or(|(_, m)| chk.lambda_min < m) {
            failing = Some((i, chk.lambda_min));
        }
    }
    let (_, margin) = worst.expect("at least two components");
    Ok(match failing {
        None => Verdict::holds(margin),
        Some((i, lm)) => {
            let e = eigh(&prob.target().sub(&prob.covs()[i]));
            Verdict::fails(
                lm,
                Witness::Component {
                    index: i,
                    xi: e.vector(0),
                    excess: -lm,
                },
            )
        }
    })
}
