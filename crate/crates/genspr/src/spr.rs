//! Subspace projection regularization driven by the generalized Golub-Kahan
//! process: a Givens-rotation QR of the lower bidiagonal `B_k` yields cheap
//! recursive updates of the iterate `x_k`, its preimage `x̄_k = N⁻¹x_k`, the
//! residual norm `φ̄_{k+1} = ‖Ax_k − b‖_{M⁻¹}`, and the solution norm
//! `‖x_k‖_{N⁻¹} = (x_kᵀx̄_k)^{1/2}`.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gengkb::{GenGkbState, ReorthPolicy, StepOutcome};
use crate::problems::InverseProblem;
use crate::stopping::{dp_check, gcv_select, gcv_value, lcurve_corner, StopConfig, StopRule};

/// Per-iteration record; `k` is 1-based.
#[derive(Clone, Debug, Serialize)]
pub struct IterRecord {
    pub k: usize,
    /// `φ̄_{k+1} = ‖Ax_k − b‖_{M⁻¹}`.
    pub phi_bar: f64,
    /// `‖x_k‖_{N⁻¹}`.
    pub sol_norm: f64,
    pub gcv: Option<f64>,
    pub rel_error: Option<f64>,
}

/// Running state of the update procedure.
pub struct SprState {
    pub k: usize,
    pub x: DVector<f64>,
    pub x_bar: DVector<f64>,
    w: DVector<f64>,
    w_bar: DVector<f64>,
    rho_bar: f64,
    pub phi_bar: f64,
    pub history: Vec<IterRecord>,
}

impl SprState {
    /// Initializes from the first bidiagonalization vectors:
    /// `w₁ = v₁`, `w̄₁ = v̄₁`, `φ̄₁ = β₁`, `ρ̄₁ = α₁`.
    pub fn init(gkb: &GenGkbState) -> Self {
        let n = gkb.v(0).len();
        Self {
            k: 0,
            x: DVector::zeros(n),
            x_bar: DVector::zeros(n),
            w: gkb.v(0).clone(),
            w_bar: gkb.v_bar(0).clone(),
            rho_bar: gkb.alphas[0],
            phi_bar: gkb.betas[0],
            history: Vec::new(),
        }
    }

    /// One Givens rotation step consuming `α_{k+1}`, `β_{k+2}` and the next
    /// basis vectors (absent on breakdown).
    pub fn update(
        &mut self,
        alpha_next: f64,
        beta_next: f64,
        v_next: Option<&DVector<f64>>,
        v_bar_next: Option<&DVector<f64>>,
    ) -> Result<()> {
        let rho = (self.rho_bar * self.rho_bar + beta_next * beta_next).sqrt();
        if rho == 0.0 {
            return Err(Error::invalid("simultaneous breakdown: rho = 0"));
        }
        let c = self.rho_bar / rho;
        let s = beta_next / rho;
        let theta_next = s * alpha_next;
        let rho_bar_next = -c * alpha_next;
        let phi = c * self.phi_bar;
        let phi_bar_next = s * self.phi_bar;

        let step = phi / rho;
        self.x.axpy(step, &self.w, 1.0);
        self.x_bar.axpy(step, &self.w_bar, 1.0);
        if let (Some(v), Some(v_bar)) = (v_next, v_bar_next) {
            let t = theta_next / rho;
            self.w = v - t * &self.w;
            self.w_bar = v_bar - t * &self.w_bar;
        }
        self.rho_bar = rho_bar_next;
        self.phi_bar = phi_bar_next;
        self.k += 1;
        Ok(())
    }

    /// `‖x_k‖_{N⁻¹}` without an `N⁻¹` solve.
    pub fn solution_norm(&self) -> f64 {
        self.x.dot(&self.x_bar).max(0.0).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    RuleStop,
    Breakdown,
    KMax,
}

#[derive(Debug)]
pub struct SolveResult {
    pub x_final: DVector<f64>,
    /// 1-based stopping index; 0 when no iteration could run.
    pub k_stop: usize,
    pub rule: StopRule,
    pub history: Vec<IterRecord>,
    pub termination: Termination,
}

/// Full run trace with solutions retained at every iteration, so a stopping
/// rule can select post hoc without rerunning.
pub struct RunHistory {
    pub records: Vec<IterRecord>,
    pub solutions: Vec<DVector<f64>>,
    pub m: usize,
    pub terminated: bool,
}

impl RunHistory {
    pub fn phi_bars(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.phi_bar).collect()
    }

    pub fn sol_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.sol_norm).collect()
    }
}

/// Runs gen-GKB + the update procedure for up to `k_max` iterations, with an
/// optional early-halt callback consulted after each iteration.
fn run_loop(
    problem: &InverseProblem,
    k_max: usize,
    reorth: ReorthPolicy,
    mut halt: impl FnMut(&[IterRecord]) -> bool,
) -> Result<RunHistory> {
    if k_max < 1 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    let m = problem.a.nrows();
    let mut gkb = GenGkbState::init(
        problem.a.as_ref(),
        &problem.b,
        &problem.m_inv,
        &problem.n_cov,
        reorth,
    )?;
    if gkb.terminated {
        return Ok(RunHistory { records: Vec::new(), solutions: Vec::new(), m, terminated: true });
    }
    let mut spr = SprState::init(&gkb);
    let mut solutions = Vec::new();
    let x_true_norm = problem.x_true.norm();

    for i in 1..=k_max {
        let outcome = gkb.step(problem.a.as_ref(), &problem.m_inv, &problem.n_cov)?;
        let beta_next = gkb.betas.get(i).copied().unwrap_or(0.0);
        let alpha_next = gkb.alphas.get(i).copied().unwrap_or(0.0);
        let (v_next, v_bar_next) = if outcome == StepOutcome::Advanced {
            (Some(gkb.v(i)), Some(gkb.v_bar(i)))
        } else {
            (None, None)
        };
        spr.update(alpha_next, beta_next, v_next, v_bar_next)?;

        let rel_error = if x_true_norm > 0.0 {
            Some((&spr.x - &problem.x_true).norm() / x_true_norm)
        } else {
            None
        };
        let gcv = if spr.k < m {
            Some(gcv_value(spr.phi_bar, m, spr.k)?)
        } else {
            None
        };
        spr.history.push(IterRecord {
            k: spr.k,
            phi_bar: spr.phi_bar,
            sol_norm: spr.solution_norm(),
            gcv,
            rel_error,
        });
        solutions.push(spr.x.clone());

        if gkb.terminated || halt(&spr.history) {
            break;
        }
    }
    Ok(RunHistory { records: spr.history, solutions, m, terminated: gkb.terminated })
}

/// Runs the full iteration to `k_max` (or breakdown) with every solution
/// retained; stopping rules are applied afterwards via [`select_index`].
pub fn run_history(
    problem: &InverseProblem,
    k_max: usize,
    reorth: ReorthPolicy,
) -> Result<RunHistory> {
    run_loop(problem, k_max, reorth, |_| false)
}

/// Applies a stopping rule to a completed history; returns the selected
/// 0-based record index.
pub fn select_index(history: &RunHistory, stop: &StopConfig) -> Result<usize> {
    let records = &history.records;
    if records.is_empty() {
        return Err(Error::invalid("empty history"));
    }
    let last = records.len() - 1;
    match stop.rule {
        StopRule::None => Ok(last),
        StopRule::Dp => Ok(records
            .iter()
            .position(|r| dp_check(r.phi_bar, history.m, stop.tau))
            .unwrap_or(last)),
        StopRule::Gcv => {
            let series: Vec<f64> = records.iter().map(|r| r.gcv.unwrap_or(f64::INFINITY)).collect();
            Ok(gcv_select(&series, stop.lookahead).unwrap_or(last))
        }
        StopRule::Lc => {
            if records.len() < 5 {
                return Ok(last);
            }
            let log_res: Vec<f64> = records.iter().map(|r| r.phi_bar.max(1e-300).ln()).collect();
            let log_norm: Vec<f64> = records.iter().map(|r| r.sol_norm.max(1e-300).ln()).collect();
            lcurve_corner(&log_res, &log_norm, stop.window)
        }
        StopRule::BestK => {
            let mut best = 0usize;
            for (i, r) in records.iter().enumerate() {
                let e = r.rel_error.ok_or_else(|| {
                    Error::invalid("best-k rule requires x_true in the problem")
                })?;
                if e < records[best].rel_error.unwrap() {
                    best = i;
                }
            }
            Ok(best)
        }
    }
}

/// The full solver: iterates gen-GKB + the update recurrences, consults the
/// stopping rule each step (running `lookahead` iterations past a candidate
/// optimum for LC/GCV/best-k), and returns the solution at the selected index.
pub fn solve(problem: &InverseProblem, stop: &StopConfig, k_max: usize) -> Result<SolveResult> {
    stop.validate()?;
    let m = problem.a.nrows();
    let tau = stop.tau;
    let lookahead = stop.lookahead;

    let halt = |records: &[IterRecord]| -> bool {
        let i = records.len() - 1;
        match stop.rule {
            StopRule::None => false,
            StopRule::Dp => dp_check(records[i].phi_bar, m, tau),
            StopRule::Gcv => {
                let best = records
                    .iter()
                    .enumerate()
                    .min_by(|a, b| {
                        let ga = a.1.gcv.unwrap_or(f64::INFINITY);
                        let gb = b.1.gcv.unwrap_or(f64::INFINITY);
                        ga.partial_cmp(&gb).unwrap().then(a.0.cmp(&b.0))
                    })
                    .map(|(j, _)| j)
                    .unwrap_or(0);
                i - best > lookahead
            }
            StopRule::BestK => {
                let best = records
                    .iter()
                    .enumerate()
                    .min_by(|a, b| {
                        let ea = a.1.rel_error.unwrap_or(f64::INFINITY);
                        let eb = b.1.rel_error.unwrap_or(f64::INFINITY);
                        ea.partial_cmp(&eb).unwrap().then(a.0.cmp(&b.0))
                    })
                    .map(|(j, _)| j)
                    .unwrap_or(0);
                i - best > lookahead
            }
            StopRule::Lc => {
                if records.len() < 5 + lookahead {
                    return false;
                }
                let log_res: Vec<f64> =
                    records.iter().map(|r| r.phi_bar.max(1e-300).ln()).collect();
                let log_norm: Vec<f64> =
                    records.iter().map(|r| r.sol_norm.max(1e-300).ln()).collect();
                match lcurve_corner(&log_res, &log_norm, stop.window) {
                    Ok(corner) => i - corner > lookahead,
                    Err(_) => false,
                }
            }
        }
    };

    let history = run_loop(problem, k_max, ReorthPolicy::Full, halt)?;
    if history.records.is_empty() {
        return Ok(SolveResult {
            x_final: DVector::zeros(problem.a.ncols()),
            k_stop: 0,
            rule: stop.rule,
            history: Vec::new(),
            termination: Termination::Breakdown,
        });
    }
    let idx = select_index(&history, stop)?;
    let ran_full = history.records.len() == k_max;
    let termination = if history.terminated {
        Termination::Breakdown
    } else if stop.rule != StopRule::None && !ran_full {
        Termination::RuleStop
    } else if stop.rule == StopRule::Dp
        && dp_check(history.records[idx].phi_bar, history.m, stop.tau)
    {
        Termination::RuleStop
    } else {
        Termination::KMax
    };
    Ok(SolveResult {
        x_final: history.solutions[idx].clone(),
        k_stop: history.records[idx].k,
        rule: stop.rule,
        history: history.records,
        termination,
    })
}
