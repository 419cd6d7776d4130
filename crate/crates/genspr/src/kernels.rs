//! Stationary covariance kernels and dense prior covariance construction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::SpdAction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Exponential,
    Matern,
}

/// Stationary kernel `κ(r)` evaluated on pairwise distances.
///
/// The exponential family uses `nu` as the exponent: `κ(r) = exp(-(r/l)^ν)`,
/// so `nu = 1` is the standard exponential kernel. Matérn smoothness is
/// restricted to the half-integer orders `1/2`, `3/2`, `5/2`, which have
/// closed forms and avoid a Bessel-function dependency.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Length-scale, > 0.
    pub l: f64,
    /// Smoothness (Matérn order or exponential exponent), > 0.
    pub nu: f64,
    /// Scale factor; `κ(0) = amplitude`.
    pub amplitude: f64,
}

const MATERN_ORDERS: [f64; 3] = [0.5, 1.5, 2.5];

impl KernelSpec {
    pub fn new(family: KernelFamily, l: f64, nu: f64) -> Result<Self> {
        Self::with_amplitude(family, l, nu, 1.0)
    }

    pub fn with_amplitude(family: KernelFamily, l: f64, nu: f64, amplitude: f64) -> Result<Self> {
        if !(l > 0.0) {
            return Err(Error::invalid(format!("length-scale must be positive, got {l}")));
        }
        if !(nu > 0.0) {
            return Err(Error::invalid(format!("smoothness must be positive, got {nu}")));
        }
        if !(amplitude > 0.0) {
            return Err(Error::invalid(format!("amplitude must be positive, got {amplitude}")));
        }
        if family == KernelFamily::Matern && !MATERN_ORDERS.iter().any(|&v| v == nu) {
            return Err(Error::invalid(format!(
                "unsupported Matérn order {nu}; supported orders are 1/2, 3/2, 5/2"
            )));
        }
        Ok(Self { family, l, nu, amplitude })
    }

    pub fn gaussian(l: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, l, 1.0)
    }

    pub fn exponential(l: f64, nu: f64) -> Result<Self> {
        Self::new(KernelFamily::Exponential, l, nu)
    }

    pub fn matern(l: f64, nu: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern, l, nu)
    }
}

/// Evaluates `κ(r)` for `r ≥ 0`. Monotone non-increasing in `r` with
/// `κ(0) = amplitude` for every supported family.
pub fn kernel_eval(spec: &KernelSpec, r: f64) -> f64 {
    debug_assert!(r >= 0.0);
    let u = r / spec.l;
    let base = match spec.family {
        KernelFamily::Gaussian => (-0.5 * u * u).exp(),
        KernelFamily::Exponential => (-u.powf(spec.nu)).exp(),
        KernelFamily::Matern => {
            if spec.nu == 0.5 {
                (-u).exp()
            } else if spec.nu == 1.5 {
                let t = 3.0_f64.sqrt() * u;
                (1.0 + t) * (-t).exp()
            } else {
                let t = 5.0_f64.sqrt() * u;
                (1.0 + t + t * t / 3.0) * (-t).exp()
            }
        }
    };
    spec.amplitude * base
}

/// Builds the dense prior covariance `N_ij = κ(‖p_i - p_j‖₂) + jitter·δ_ij`
/// on the given points and probes it with a Cholesky factorization.
///
/// The result is exactly symmetric by construction. The factorization probe
/// rejects matrices that are numerically indefinite at the given jitter.
pub fn build_covariance(points: &[Vec<f64>], spec: &KernelSpec, jitter: f64) -> Result<SpdAction> {
    if points.is_empty() {
        return Err(Error::invalid("points must be non-empty"));
    }
    if jitter < 0.0 {
        return Err(Error::invalid("jitter must be non-negative"));
    }
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = spec.amplitude + jitter;
        for j in 0..i {
            let r = points[i]
                .iter()
                .zip(points[j].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if !r.is_finite() {
                return Err(Error::invalid("non-finite pairwise distance"));
            }
            let v = kernel_eval(spec, r);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::FactorizationFailed { jitter });
    }
    Ok(SpdAction::Kernel(m))
}

/// Default diagonal jitter used when building prior covariances.
pub fn default_jitter(amplitude: f64) -> f64 {
    1e-10 * amplitude
}

/// Uniform 1-D grid of `n` points, as column vectors for [`build_covariance`].
pub fn grid_points_1d(grid: &[f64]) -> Vec<Vec<f64>> {
    grid.iter().map(|&t| vec![t]).collect()
}
