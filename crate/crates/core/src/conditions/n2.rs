use crate::error::{Error, Result};
use crate::matcore::{eigh, Mat};
use crate::problem::MixtureProblem;
use crate::scalar::Scalar;
use crate::verdict::{GammaWitness, Verdict, Witness};

/// Checks a cross block `Θ` for two components: `[[Σ1, Θ], [Θ^T, Σ2]] ⪰ 0`
/// and `Σ ⪯ p1² Σ1 + p2² Σ2 + p1 p2 (Θ + Θ^T)`.
pub fn check_n2_theta<T: Scalar>(prob: &MixtureProblem<T>, theta: &Mat<T>, eps: T) -> Result<Verdict<T>> {
    if prob.n() != 2 {
        return Err(Error::InvalidProblem(format!("expected two components, got {}", prob.n())));
    }
    let d = prob.d();
    if theta.rows() != d || theta.cols() != d {
        return Err(Error::DimensionMismatch(format!(
            "Theta is {}x{}, expected {d}x{d}",
            theta.rows(),
            theta.cols()
        )));
    }
    let g = GammaWitness::from_blocks(2, d, |i, j| match (i, j) {
        (0, 0) => prob.covs()[0].as_mat().clone(),
        (1, 1) => prob.covs()[1].as_mat().clone(),
        (0, 1) => theta.clone(),
        _ => theta.transpose(),
    });
    let chk = g.validate(prob, eps);
    if chk.valid {
        return Ok(Verdict::holds(chk.dominance_lambda_min.min(chk.cone_lambda_min)).with_witness(Witness::Gamma(g)));
    }
    let e_block = eigh(g.gamma());
    let cone_ok = crate::matcore::is_psd(g.gamma(), eps)?.is_psd;
    Ok(if !cone_ok {
        Verdict::fails(
            e_block.min(),
            Witness::Direction {
                xi: e_block.vector(0),
                value: e_block.min(),
            },
        )
    } else {
        let dom = prob.a_gamma_at(g.gamma()).sub(prob.target());
        let e = eigh(&dom);
        Verdict::fails(
            e.min(),
            Witness::Direction {
                xi: e.vector(0),
                value: e.min(),
            },
        )
    })
}
