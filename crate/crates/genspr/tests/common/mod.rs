//! Shared fixtures and invariant checks for the integration test suite.

use genspr::experiment::{build_problem, ExperimentConfig, ProblemKind};
use genspr::problems::InverseProblem;
use genspr::spr::RunHistory;
use genspr::stopping::dp_check;

/// Builds a named test problem with the module defaults (gravity: gaussian
/// prior l = 0.1, white noise 5e-3; shaw: exponential prior, diagonal noise
/// 1e-2; blur2d: identity prior, white noise 1e-2), overriding size and seed.
pub fn fixture(problem: &str, n: usize, seed: u64) -> InverseProblem {
    let kind: ProblemKind = problem.parse().unwrap();
    let mut cfg = ExperimentConfig::defaults(kind);
    cfg.n = n;
    cfg.seed = seed;
    build_problem(&cfg).unwrap()
}

/// Asserts the run invariants that every solver trace must satisfy:
/// residual norm non-increasing, solution norm non-decreasing, and the
/// discrepancy predicate never flipping back to false once true.
pub fn assert_monotone(hist: &RunHistory, tau: f64, label: &str) {
    let recs = &hist.records;
    for w in recs.windows(2) {
        assert!(
            w[1].phi_bar <= w[0].phi_bar * (1.0 + 1e-12),
            "{label}: phi_bar increased at k = {}: {} -> {}",
            w[1].k,
            w[0].phi_bar,
            w[1].phi_bar
        );
        assert!(
            w[1].sol_norm >= w[0].sol_norm * (1.0 - 1e-12),
            "{label}: sol_norm decreased at k = {}: {} -> {}",
            w[1].k,
            w[0].sol_norm,
            w[1].sol_norm
        );
    }
    let mut seen = false;
    for r in recs {
        let now = dp_check(r.phi_bar, hist.m, tau);
        assert!(!seen || now, "{label}: DP predicate flipped back to false at k = {}", r.k);
        seen = seen || now;
    }
}
