//! Test problem generators: 1-D Fredholm problems (gravity surveying and the
//! shaw image restoration model), a matrix-free 2-D separable blur, and
//! seeded Gaussian noise (white and non-white diagonal).
//!
//! Noise generation is a pure function of `(b_true, level, seed)`: the RNG is
//! ChaCha12 with 64-bit integer seeding and normal variates drawn through
//! `rand_distr::StandardNormal`. Pinned crate versions make the realizations
//! reproducible across runs and platforms.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{DenseOperator, LinearOperator, SpdAction};

/// Bundle of one inverse problem instance: forward operator, noisy and
/// noiseless data, ground truth, covariance actions, and metadata.
pub struct InverseProblem {
    pub a: Box<dyn LinearOperator>,
    pub b: DVector<f64>,
    pub b_true: DVector<f64>,
    pub x_true: DVector<f64>,
    pub m_inv: SpdAction,
    pub m: SpdAction,
    pub n_cov: SpdAction,
    pub points: Vec<Vec<f64>>,
    pub meta: ProblemMeta,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub name: String,
    pub m: usize,
    pub n: usize,
    pub noise: String,
    pub noise_level: f64,
    pub seed: u64,
}

/// Output of a forward-model generator before noise is added.
pub struct GeneratedProblem {
    pub a: Box<dyn LinearOperator>,
    pub x_true: DVector<f64>,
    pub b_true: DVector<f64>,
    pub points: Vec<Vec<f64>>,
}

/// 1-D gravity surveying model: reconstruct a mass distribution at depth
/// `d = 0.25` from the vertical gravity field at the surface. Midpoint
/// quadrature on `[0, 1]` with `m = n` points.
pub fn gravity_problem(n: usize) -> Result<GeneratedProblem> {
    if n < 2 {
        return Err(Error::invalid("gravity requires n >= 2"));
    }
    let d = 0.25;
    let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let h = 1.0 / n as f64;
    let a = DMatrix::from_fn(n, n, |i, j| {
        let st = grid[i] - grid[j];
        h * d * (d * d + st * st).powf(-1.5)
    });
    let x_true = DVector::from_fn(n, |i, _| {
        let t = grid[i];
        (std::f64::consts::PI * t).sin() + 0.5 * (2.0 * std::f64::consts::PI * t).sin()
    });
    let b_true = &a * &x_true;
    Ok(GeneratedProblem {
        a: Box::new(DenseOperator::new(a)),
        x_true,
        b_true,
        points: grid.iter().map(|&t| vec![t]).collect(),
    })
}

/// 1-D image restoration model (shaw): midpoint quadrature on
/// `[-π/2, π/2]` with weight `π/n`. The sinc factor is evaluated as 1 when
/// `|u| < 1e-8`.
pub fn shaw_problem(n: usize) -> Result<GeneratedProblem> {
    if n < 2 {
        return Err(Error::invalid("shaw requires n >= 2"));
    }
    let pi = std::f64::consts::PI;
    let grid: Vec<f64> = (0..n).map(|i| -pi / 2.0 + (i as f64 + 0.5) * pi / n as f64).collect();
    let h = pi / n as f64;
    let a = DMatrix::from_fn(n, n, |i, j| h * shaw_kernel(grid[i], grid[j]));
    let x_true = DVector::from_fn(n, |i, _| {
        let t = grid[i];
        2.0 * (-6.0 * (t - 0.8) * (t - 0.8)).exp() + (-2.0 * (t + 0.5) * (t + 0.5)).exp()
    });
    let b_true = &a * &x_true;
    Ok(GeneratedProblem {
        a: Box::new(DenseOperator::new(a)),
        x_true,
        b_true,
        points: grid.iter().map(|&t| vec![t]).collect(),
    })
}

pub(crate) fn shaw_kernel(s: f64, t: f64) -> f64 {
    let u = std::f64::consts::PI * (s.sin() + t.sin());
    let sinc = if u.abs() < 1e-8 { 1.0 } else { u.sin() / u };
    let c = s.cos() + t.cos();
    c * c * sinc * sinc
}

/// Matrix-free separable Gaussian blur (zero boundary) on an `n1 × n1` image.
/// Symmetric taps make the operator self-adjoint. A `blur_width` small enough
/// that the discrete kernel is a delta reduces to the identity.
pub struct Blur2dOperator {
    n1: usize,
    taps: Vec<f64>,
    radius: usize,
}

impl Blur2dOperator {
    pub fn new(n1: usize, blur_width: f64) -> Self {
        let (taps, radius) = blur_taps(blur_width);
        Self { n1, taps, radius }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Dense 1-D blur matrix (zero boundary); the 2-D operator is its
    /// Kronecker square.
    pub fn dense_1d(&self) -> DMatrix<f64> {
        let n = self.n1;
        let r = self.radius as isize;
        DMatrix::from_fn(n, n, |i, j| {
            let d = i as isize - j as isize;
            if d.abs() <= r {
                self.taps[(d + r) as usize]
            } else {
                0.0
            }
        })
    }

    fn blur_axis(&self, img: &[f64], out: &mut [f64], row_major: bool) {
        let n = self.n1;
        let r = self.radius as isize;
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for (t, &w) in self.taps.iter().enumerate() {
                    let off = t as isize - r;
                    let jj = j as isize + off;
                    if jj >= 0 && (jj as usize) < n {
                        let idx = if row_major {
                            i * n + jj as usize
                        } else {
                            jj as usize * n + i
                        };
                        acc += w * img[idx];
                    }
                }
                let idx = if row_major { i * n + j } else { j * n + i };
                out[idx] = acc;
            }
        }
    }
}

fn blur_taps(blur_width: f64) -> (Vec<f64>, usize) {
    if blur_width <= 1e-8 {
        return (vec![1.0], 0);
    }
    let radius = (3.0 * blur_width).ceil() as usize;
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|t| {
            let d = t as f64 - radius as f64;
            (-0.5 * d * d / (blur_width * blur_width)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    for w in &mut taps {
        *w /= s;
    }
    (taps, radius)
}

impl LinearOperator for Blur2dOperator {
    fn nrows(&self) -> usize {
        self.n1 * self.n1
    }

    fn ncols(&self) -> usize {
        self.n1 * self.n1
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut tmp = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        self.blur_axis(x.as_slice(), &mut tmp, true);
        self.blur_axis(&tmp, &mut out, false);
        DVector::from_vec(out)
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        // symmetric taps with zero boundary: self-adjoint
        self.apply(y)
    }
}

/// 2-D blur surrogate: superposed Gaussian bumps blurred by a separable
/// Gaussian kernel. `n = m = n1²`; the operator never materializes `A`.
pub fn blur2d_problem(n1: usize, blur_width: f64) -> Result<GeneratedProblem> {
    if n1 < 8 {
        return Err(Error::invalid("blur2d requires n1 >= 8"));
    }
    let op = Blur2dOperator::new(n1, blur_width);
    let mut x_true = DVector::zeros(n1 * n1);
    let mut points = Vec::with_capacity(n1 * n1);
    for i in 0..n1 {
        for j in 0..n1 {
            let x = (j as f64 + 0.5) / n1 as f64;
            let y = (i as f64 + 0.5) / n1 as f64;
            let g1 = 0.7
                * (-((x - 0.4) / 0.12).powi(2) - ((y - 0.5) / 0.15).powi(2)).exp();
            let g2 = (-((x - 0.7) / 0.1).powi(2) - ((y - 0.8) / 0.08).powi(2)).exp();
            x_true[i * n1 + j] = g1 + g2;
            points.push(vec![x, y]);
        }
    }
    let b_true = op.apply(&x_true);
    Ok(GeneratedProblem { a: Box::new(op), x_true, b_true, points })
}

/// White noise: `σ = level·‖b_true‖₂/√m`, `ε ~ N(0, σ²I)` seeded, `M = σ²I`.
pub fn add_noise_white(
    b_true: &DVector<f64>,
    level: f64,
    seed: u64,
) -> Result<(DVector<f64>, SpdAction, SpdAction)> {
    if !(level > 0.0) {
        return Err(Error::invalid("noise level must be positive"));
    }
    let m = b_true.len();
    let norm = b_true.norm();
    if norm == 0.0 {
        return Err(Error::invalid("b_true is zero; relative noise level undefined"));
    }
    let sigma = level * norm / (m as f64).sqrt();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let eps = DVector::from_fn(m, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
    let m_cov = SpdAction::scaled_identity(m, sigma * sigma);
    let m_inv = SpdAction::scaled_identity(m, 1.0 / (sigma * sigma));
    Ok((b_true + eps, m_inv, m_cov))
}

/// Non-white diagonal noise: `d_i` uniform in `{1,…,5}`,
/// `γ = level²·‖b_true‖₂²/Σd_i`, `M = diag(γ d)`, `ε_i ~ N(0, γ d_i)`.
pub fn add_noise_diagonal(
    b_true: &DVector<f64>,
    level: f64,
    seed: u64,
) -> Result<(DVector<f64>, SpdAction, SpdAction)> {
    if !(level > 0.0) {
        return Err(Error::invalid("noise level must be positive"));
    }
    let m = b_true.len();
    let norm_sq = b_true.norm_squared();
    if norm_sq == 0.0 {
        return Err(Error::invalid("b_true is zero; relative noise level undefined"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let d: Vec<f64> = (0..m).map(|_| rng.gen_range(1..=5) as f64).collect();
    let d_sum: f64 = d.iter().sum();
    let gamma = level * level * norm_sq / d_sum;
    let eps = DVector::from_fn(m, |i, _| {
        (gamma * d[i]).sqrt() * rng.sample::<f64, _>(StandardNormal)
    });
    let diag = DVector::from_fn(m, |i, _| gamma * d[i]);
    let m_inv = SpdAction::Diagonal(diag.map(|v| 1.0 / v));
    let m_cov = SpdAction::Diagonal(diag);
    Ok((b_true + eps, m_inv, m_cov))
}
