//! Early-stopping rules: discrepancy principle, L-curve corner, and GCV
//! minimization over the iteration count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    Dp,
    Lc,
    Gcv,
    /// Oracle rule: minimize the true relative error (requires `x_true`).
    BestK,
    /// Run to `k_max` or breakdown.
    None,
}

impl StopRule {
    pub fn name(&self) -> &'static str {
        match self {
            StopRule::Dp => "dp",
            StopRule::Lc => "lc",
            StopRule::Gcv => "gcv",
            StopRule::BestK => "best-k",
            StopRule::None => "none",
        }
    }
}

impl std::str::FromStr for StopRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dp" => Ok(StopRule::Dp),
            "lc" => Ok(StopRule::Lc),
            "gcv" => Ok(StopRule::Gcv),
            "best-k" | "best" => Ok(StopRule::BestK),
            "none" => Ok(StopRule::None),
            other => Err(Error::invalid(format!(
                "unknown stopping rule '{other}' (expected dp, lc, gcv, best-k, none)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StopConfig {
    pub rule: StopRule,
    /// DP safety factor, > 1.
    pub tau: f64,
    /// Iterations to run beyond a candidate optimum before committing.
    pub lookahead: usize,
    /// Moving-average width for L-curve smoothing.
    pub window: usize,
}

impl StopConfig {
    pub fn new(rule: StopRule) -> Self {
        Self { rule, tau: 1.01, lookahead: 10, window: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rule == StopRule::Dp && !(self.tau > 1.0) {
            return Err(Error::invalid(format!("DP requires tau > 1, got {}", self.tau)));
        }
        if self.window == 0 {
            return Err(Error::invalid("window must be at least 1"));
        }
        Ok(())
    }
}

impl Default for StopConfig {
    fn default() -> Self {
        Self::new(StopRule::Dp)
    }
}

/// Discrepancy principle: true iff `φ̄_{k+1} ≤ τ·√m`. The whitened-noise
/// expectation gives `E‖L_Mε‖₂² = m`.
pub fn dp_check(phi_bar: f64, m: usize, tau: f64) -> bool {
    phi_bar <= tau * (m as f64).sqrt()
}

/// GCV function `φ̄²_{k+1}/(m − k)²`.
pub fn gcv_value(phi_bar: f64, m: usize, k: usize) -> Result<f64> {
    if k >= m {
        return Err(Error::invalid(format!("GCV requires k < m (k = {k}, m = {m})")));
    }
    let d = (m - k) as f64;
    Ok(phi_bar * phi_bar / (d * d))
}

/// Global argmin of a GCV series (0-based), committing once no new minimum has
/// appeared for `lookahead` consecutive entries or the series is exhausted.
/// Ties break to the smallest index.
pub fn gcv_select(series: &[f64], lookahead: usize) -> Option<usize> {
    if series.is_empty() {
        return None;
    }
    let mut best = 0usize;
    for (i, &v) in series.iter().enumerate() {
        if v < series[best] {
            best = i;
        } else if i - best > lookahead {
            break;
        }
    }
    Some(best)
}

/// L-curve corner: index of maximum discrete Menger curvature of the smoothed
/// point sequence `(log φ̄_{k+1}, log ‖x_k‖_{N⁻¹})`. Endpoints are excluded;
/// ties break to the smallest index.
pub fn lcurve_corner(log_residuals: &[f64], log_norms: &[f64], window: usize) -> Result<usize> {
    if log_residuals.len() != log_norms.len() {
        return Err(Error::DimensionMismatch {
            expected: log_residuals.len(),
            got: log_norms.len(),
        });
    }
    let n = log_residuals.len();
    if n < 5 {
        return Err(Error::invalid(format!("L-curve needs at least 5 points, got {n}")));
    }
    let xs = moving_average(log_residuals, window);
    let ys = moving_average(log_norms, window);
    let mut best = 1usize;
    // Menger curvature is non-negative, so -1 is below every candidate
    let mut best_curv = -1.0f64;
    for i in 1..n - 1 {
        let c = menger_curvature(
            (xs[i - 1], ys[i - 1]),
            (xs[i], ys[i]),
            (xs[i + 1], ys[i + 1]),
        );
        if c > best_curv + 1e-15 * best_curv.abs().max(1.0) {
            best_curv = c;
            best = i;
        }
    }
    Ok(best)
}

fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = xs.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Curvature of the circle through three points; zero for collinear points.
fn menger_curvature(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
    let area2 = (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0);
    let a = ((q.0 - p.0).powi(2) + (q.1 - p.1).powi(2)).sqrt();
    let b = ((r.0 - q.0).powi(2) + (r.1 - q.1).powi(2)).sqrt();
    let c = ((r.0 - p.0).powi(2) + (r.1 - p.1).powi(2)).sqrt();
    let denom = a * b * c;
    if denom == 0.0 {
        return 0.0;
    }
    2.0 * area2.abs() / denom
}
