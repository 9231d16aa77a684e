use serde::Serialize;

use crate::error::{Error, Result};
use crate::matcore::{eigh, is_psd, psd_slack, Mat, SymMat};
use crate::problem::MixtureProblem;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Holds,
    Fails,
    Unknown,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Holds => "holds",
            Status::Fails => "fails",
            Status::Unknown => "unknown",
        }
    }
}

/// Symmetric `nd × nd` coupling covariance with addressable `d × d` blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar + Serialize"))]
pub struct GammaWitness<T> {
    n: usize,
    d: usize,
    gamma: SymMat<T>,
}

/// Numbers behind a `GammaWitness` validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaCheck<T> {
    pub block_residual: T,
    /// `lambda_min(Γ)` for the full cone, or the smallest pair-block eigenvalue.
    pub cone_lambda_min: T,
    /// `lambda_min(A Γ A^T - Σ)`.
    pub dominance_lambda_min: T,
    pub valid: bool,
}

impl<T: Scalar> GammaWitness<T> {
    pub fn new(n: usize, d: usize, gamma: SymMat<T>) -> Result<Self> {
        if gamma.dim() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "Gamma has dimension {}, expected {}",
                gamma.dim(),
                n * d
            )));
        }
        Ok(Self { n, d, gamma })
    }

    /// Assembles from the upper blocks; `Γ_(ji) = Γ_(ij)^T`.
    pub fn from_blocks(n: usize, d: usize, block: impl Fn(usize, usize) -> Mat<T>) -> Self {
        let mut g = Mat::zeros(n * d, n * d);
        for i in 0..n {
            for j in i..n {
                let b = block(i, j);
                g.set_block(i * d, j * d, &b);
                g.set_block(j * d, i * d, &b.transpose());
            }
        }
        Self {
            n,
            d,
            gamma: SymMat::symmetrize(&g),
        }
    }

    /// `Γ_(ii) = Σ_i`, `Γ_(ij) = Σ` otherwise; PSD as soon as `Σ ⪯ Σ_i` for all `i`.
    pub fn all_blocks(prob: &MixtureProblem<T>, off: &SymMat<T>) -> Self {
        Self::from_blocks(prob.n(), prob.d(), |i, j| {
            if i == j {
                prob.covs()[i].as_mat().clone()
            } else {
                off.as_mat().clone()
            }
        })
    }

    pub fn block_diagonal(prob: &MixtureProblem<T>) -> Self {
        let d = prob.d();
        Self::from_blocks(prob.n(), d, |i, j| {
            if i == j {
                prob.covs()[i].as_mat().clone()
            } else {
                Mat::zeros(d, d)
            }
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn gamma(&self) -> &SymMat<T> {
        &self.gamma
    }

    pub fn into_gamma(self) -> SymMat<T> {
        self.gamma
    }

    pub fn block(&self, i: usize, j: usize) -> Mat<T> {
        self.gamma.block(i * self.d, j * self.d, self.d, self.d)
    }

    /// The `2d × 2d` principal submatrix on components `i` and `j`.
    pub fn pair_block(&self, i: usize, j: usize) -> SymMat<T> {
        let d = self.d;
        SymMat::from_upper(2 * d, |r, c| {
            let gr = if r < d { i * d + r } else { j * d + r - d };
            let gc = if c < d { i * d + c } else { j * d + c - d };
            self.gamma[(gr, gc)]
        })
    }

    /// Overwrites the diagonal blocks with the exact `Σ_i`.
    pub fn enforce_diagonal(&mut self, covs: &[SymMat<T>]) {
        let d = self.d;
        let mut g = self.gamma.as_mat().clone();
        for (i, c) in covs.iter().enumerate() {
            g.set_block(i * d, i * d, c);
        }
        self.gamma = SymMat::symmetrize(&g);
    }

    fn block_residual(&self, prob: &MixtureProblem<T>) -> T {
        (0..self.n)
            .map(|i| (&self.block(i, i) - prob.covs()[i].as_mat()).frobenius())
            .fold(T::zero(), |a, b| a.max(b))
    }

    fn dominance(&self, prob: &MixtureProblem<T>, eps: T) -> (T, bool) {
        let agat = prob.a_gamma_at(&self.gamma);
        let diff = agat.sub(prob.target());
        let e = eigh(&diff);
        let slack = psd_slack(eigh(&agat).norm2().max(eigh(prob.target()).norm2()), eps);
        (e.min(), e.min() >= -slack)
    }

    fn shape_ok(&self, prob: &MixtureProblem<T>) -> bool {
        self.n == prob.n() && self.d == prob.d()
    }

    /// Condition (3): `Γ ⪰ 0`, diagonal blocks `Σ_i`, `Σ ⪯ A Γ A^T`, all within `eps`.
    pub fn validate(&self, prob: &MixtureProblem<T>, eps: T) -> GammaCheck<T> {
        if !self.shape_ok(prob) || !self.gamma.is_finite() {
            return GammaCheck::invalid();
        }
        let block_residual = self.block_residual(prob);
        let cone = is_psd(&self.gamma, eps).expect("finite");
        let (dom, dom_ok) = self.dominance(prob, eps);
        let block_ok = block_residual <= eps * (T::one() + prob.scale());
        GammaCheck {
            block_residual,
            cone_lambda_min: cone.lambda_min,
            dominance_lambda_min: dom,
            valid: block_ok && cone.is_psd && dom_ok,
        }
    }

    /// Pairwise relaxation: each `2d × 2d` pair block PSD instead of `Γ` itself.
    pub fn validate_pairwise(&self, prob: &MixtureProblem<T>, eps: T) -> GammaCheck<T> {
        if !self.shape_ok(prob) || !self.gamma.is_finite() {
            return GammaCheck::invalid();
        }
        let block_residual = self.block_residual(prob);
        let mut worst = T::infinity();
        let mut all_ok = true;
        for i in 0..self.n {
            for j in i + 1..self.n {
                let chk = is_psd(&self.pair_block(i, j), eps).expect("finite");
                worst = worst.min(chk.lambda_min);
                all_ok &= chk.is_psd;
            }
        }
        let (dom, dom_ok) = self.dominance(prob, eps);
        let block_ok = block_residual <= eps * (T::one() + prob.scale());
        GammaCheck {
            block_residual,
            cone_lambda_min: worst,
            dominance_lambda_min: dom,
            valid: block_ok && all_ok && dom_ok,
        }
    }

    pub fn cast<U: Scalar>(&self) -> GammaWitness<U> {
        GammaWitness {
            n: self.n,
            d: self.d,
            gamma: self.gamma.cast(),
        }
    }
}

impl<T: Scalar> GammaCheck<T> {
    fn invalid() -> Self {
        Self {
            block_residual: T::infinity(),
            cone_lambda_min: T::neg_infinity(),
            dominance_lambda_min: T::neg_infinity(),
            valid: false,
        }
    }
}

/// Certificate `(M, C)` of condition (2) with the derived scalings.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar + Serialize"))]
pub struct CorrelCertificate<T> {
    pub m: Mat<T>,
    pub c: SymMat<T>,
    /// `D_i = diag(sqrt((M Σ_i M^T)_kk))`, stored as diagonals.
    pub d_i: Vec<Vec<T>>,
    /// `D = Σ_i p_i D_i`.
    pub d: Vec<T>,
    /// Stacked `nd × d` matrix with blocks `D_i`, so that `A B = D`.
    pub b: Mat<T>,
    /// Whether `C` is also associated with `Σ̂` (diagonal `D_kk²`, off-diagonal from `M Σ M^T`).
    pub associated_with_sigma_hat: bool,
}

impl<T: Scalar> CorrelCertificate<T> {
    /// `Γ = (I ⊗ M^{-1}) B C B^T (I ⊗ M^{-1})^T`, the coupling covariance the certificate induces.
    pub fn gamma(&self, n: usize, m_inv: &Mat<T>) -> GammaWitness<T> {
        let d = self.d.len();
        let bcb = self.b.matmul(&self.c).mul_t(&self.b);
        GammaWitness::from_blocks(n, d, |i, j| {
            let blk = bcb.block(i * d, j * d, d, d);
            m_inv.matmul(&blk).mul_t(m_inv)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Scalar + Serialize"))]
pub enum Witness<T> {
    /// Direction `ξ` with `h(ξ) < 0`, or an eigenvector certifying a failed matrix inequality.
    Direction { xi: Vec<T>, value: T },
    /// Scan parameter of the n=2 matrix form together with its worst eigenvector.
    Alpha { alpha: T, xi: Vec<T>, value: T },
    Gamma(GammaWitness<T>),
    Correl(CorrelCertificate<T>),
    /// Correlation entry on which two transformed components disagree.
    CorrelMismatch { i: usize, j: usize, row: usize, col: usize, gap: T },
    /// Component whose covariance is not dominated, with the offending direction.
    Component { index: usize, xi: Vec<T>, excess: T },
    /// Dual matrix `Y ⪰ 0` refuting the n=2 coupling condition.
    Dual { y: SymMat<T>, gap: T },
    /// Convex test function with `E f(lhs) > E f(rhs)`.
    TestFunction { label: String, lhs: T, rhs: T },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub residuals: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl Diagnostics {
    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn residual(&mut self, name: &str, v: f64) {
        self.residuals.push((name.to_string(), v));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar + Serialize"))]
pub struct Verdict<T> {
    pub status: Status,
    /// Signed distance to the boundary in the checker's own metric.
    pub margin: T,
    pub witness: Option<Witness<T>>,
    pub diagnostics: Diagnostics,
    /// Margin within the tolerance band around zero.
    pub boundary: bool,
    /// Holds only as necessary-condition evidence (finite test suites).
    pub evidence_only: bool,
}

impl<T: Scalar> Verdict<T> {
    pub fn new(status: Status, margin: T) -> Self {
        Self {
            status,
            margin,
            witness: None,
            diagnostics: Diagnostics::default(),
            boundary: false,
            evidence_only: false,
        }
    }

    pub fn holds(margin: T) -> Self {
        Self::new(Status::Holds, margin)
    }

    pub fn fails(margin: T, witness: Witness<T>) -> Self {
        Self::new(Status::Fails, margin).with_witness(witness)
    }

    pub fn unknown(margin: T) -> Self {
        Self::new(Status::Unknown, margin)
    }

    pub fn with_witness(mut self, w: Witness<T>) -> Self {
        self.witness = Some(w);
        self
    }

    pub fn with_diagnostics(mut self, d: Diagnostics) -> Self {
        self.diagnostics = d;
        self
    }

    pub fn gamma(&self) -> Option<&GammaWitness<T>> {
        match &self.witness {
            Some(Witness::Gamma(g)) => Some(g),
            _ => None,
        }
    }

    pub fn correl(&self) -> Option<&CorrelCertificate<T>> {
        match &self.witness {
            Some(Witness::Correl(c)) => Some(c),
            _ => None,
        }
    }

    pub fn is_holds(&self) -> bool {
        self.status == Status::Holds
    }

    pub fn is_fails(&self) -> bool {
        self.status == Status::Fails
    }
}
