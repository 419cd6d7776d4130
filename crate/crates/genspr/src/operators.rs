//! Matrix-free contracts for the forward map `A`, SPD matrix actions
//! (`M⁻¹·`, `N·`), and the weighted inner products they induce.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A linear operator `A: ℝⁿ → ℝᵐ` exposed only through its action and the
/// action of its transpose. Implementations must be deterministic: the same
/// input yields a bit-identical output.
pub trait LinearOperator: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    /// Computes `A x` for `x ∈ ℝⁿ`.
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Computes `Aᵀ y` for `y ∈ ℝᵐ`.
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64>;

    /// Dense matrix form, when one is available. The oracle module refuses
    /// operators that return `None`.
    fn as_dense(&self) -> Option<&DMatrix<f64>> {
        None
    }
}

/// Dense-backed forward operator.
pub struct DenseOperator {
    matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(y)
    }

    fn as_dense(&self) -> Option<&DMatrix<f64>> {
        Some(&self.matrix)
    }
}

/// The action of a symmetric positive definite matrix `W`, used for the noise
/// precision `M⁻¹` and the prior covariance `N`. The solver never inverts
/// these; it only multiplies by them.
#[derive(Clone, Debug)]
pub enum SpdAction {
    /// Diagonal `W = diag(d)` with `d > 0`.
    Diagonal(DVector<f64>),
    /// Explicit dense SPD matrix.
    Dense(DMatrix<f64>),
    /// Dense matrix built from a stationary covariance kernel. Behaves like
    /// `Dense`; the tag records provenance for reports.
    Kernel(DMatrix<f64>),
}

impl SpdAction {
    pub fn identity(dim: usize) -> Self {
        SpdAction::Diagonal(DVector::from_element(dim, 1.0))
    }

    pub fn scaled_identity(dim: usize, value: f64) -> Self {
        SpdAction::Diagonal(DVector::from_element(dim, value))
    }

    pub fn dim(&self) -> usize {
        match self {
            SpdAction::Diagonal(d) => d.len(),
            SpdAction::Dense(w) | SpdAction::Kernel(w) => w.nrows(),
        }
    }

    pub fn variant_tag(&self) -> &'static str {
        match self {
            SpdAction::Diagonal(_) => "diagonal",
            SpdAction::Dense(_) => "dense",
            SpdAction::Kernel(_) => "kernel-backed",
        }
    }

    /// Computes `W x`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            SpdAction::Diagonal(d) => x.component_mul(d),
            SpdAction::Dense(w) | SpdAction::Kernel(w) => w * x,
        }
    }

    /// The action of `W⁻¹` for the diagonal variant. Dense variants are
    /// inverted only in the oracle module via factorization.
    pub fn inverse_diagonal(&self) -> Option<SpdAction> {
        match self {
            SpdAction::Diagonal(d) => Some(SpdAction::Diagonal(d.map(|v| 1.0 / v))),
            _ => None,
        }
    }

    /// Dense matrix form of `W`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SpdAction::Diagonal(d) => DMatrix::from_diagonal(d),
            SpdAction::Dense(w) | SpdAction::Kernel(w) => w.clone(),
        }
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Weighted inner product `uᵀ (W v)`.
pub fn weighted_inner(u: &DVector<f64>, v: &DVector<f64>, w: &SpdAction) -> Result<f64> {
    check_dim(w.dim(), u.len())?;
    check_dim(w.dim(), v.len())?;
    Ok(u.dot(&w.apply(v)))
}

/// Weighted norm `(uᵀ W u)^{1/2}`.
///
/// A radicand below `-1e-14` (relative to `‖u‖²`) signals a non-SPD `W` and is
/// reported as an error; small negative rounding is clamped to zero.
pub fn weighted_norm(u: &DVector<f64>, w: &SpdAction) -> Result<f64> {
    let q = weighted_inner(u, u, w)?;
    let scale = u.norm_squared().max(1.0);
    if q < -1e-14 * scale {
        return Err(Error::NotSpd(format!("negative quadratic form {q:e}")));
    }
    Ok(q.max(0.0).sqrt())
}
