//! Matrix-free iterative regularization for Bayesian linear inverse problems
//! `b = Ax + ε` with Gaussian noise covariance `M` and Gaussian prior
//! covariance `N`.
//!
//! The solver projects the weighted least-squares problem onto growing Krylov
//! subspaces produced by a generalized Golub-Kahan bidiagonalization that works
//! in the `M⁻¹`/`N⁻¹` inner products, and regularizes by early stopping
//! (discrepancy principle, L-curve corner, or GCV). A dense desk-scale
//! [`oracle`] module verifies the solver against GSVD-based theory.

pub mod error;
pub mod experiment;
pub mod gengkb;
pub mod io;
pub mod kernels;
pub mod operators;
pub mod oracle;
pub mod problems;
pub mod spr;
pub mod stopping;

pub use error::{Error, Result};
pub use gengkb::{GenGkbState, ReorthPolicy};
pub use kernels::{KernelFamily, KernelSpec};
pub use operators::{DenseOperator, LinearOperator, SpdAction};
pub use problems::InverseProblem;
pub use spr::{SolveResult, SprState, Termination};
pub use stopping::{StopConfig, StopRule};
