//! Experiment runner: builds a seeded test problem, runs the solver once to
//! `k_max` with the full history retained, applies each requested stopping
//! rule post hoc, and writes CSV/JSON reports plus solution vectors.
//!
//! Reports are a pure function of the config: the same config (including
//! seed) produces bit-identical files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gengkb::ReorthPolicy;
use crate::io;
use crate::kernels::{build_covariance, default_jitter, KernelSpec};
use crate::operators::SpdAction;
use crate::problems::{
    add_noise_diagonal, add_noise_white, blur2d_problem, gravity_problem, shaw_problem,
    InverseProblem, ProblemMeta,
};
use crate::spr::{run_history, select_index, RunHistory};
use crate::stopping::{StopConfig, StopRule};

pub const SCHEMA_VERSION: u32 = 1;
const ORACLE_DIM_CAP: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Gravity,
    Shaw,
    Blur2d,
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gravity" => Ok(ProblemKind::Gravity),
            "shaw" => Ok(ProblemKind::Shaw),
            "blur2d" => Ok(ProblemKind::Blur2d),
            other => Err(Error::invalid(format!(
                "unknown problem '{other}' (expected gravity, shaw, blur2d)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    White,
    Diagonal,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "diagonal" => Ok(NoiseKind::Diagonal),
            other => Err(Error::invalid(format!(
                "unknown noise kind '{other}' (expected white, diagonal)"
            ))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version_default")]
    pub schema_version: u32,
    pub problem: ProblemKind,
    /// Grid size; side length `n1` for blur2d (total unknowns `n1²`).
    pub n: usize,
    /// Prior covariance kernel; `None` means identity prior.
    pub kernel: Option<KernelSpec>,
    pub noise: NoiseKind,
    pub level: f64,
    pub seed: u64,
    pub rules: Vec<StopRule>,
    pub tau: f64,
    pub lookahead: usize,
    pub window: usize,
    pub k_max: usize,
    pub oracle: bool,
    pub output_dir: PathBuf,
}

fn schema_version_default() -> u32 {
    SCHEMA_VERSION
}

impl ExperimentConfig {
    /// Problem-specific defaults matching the desk-scale experiment setups:
    /// gravity with a gaussian prior `l = 0.1`, shaw with an exponential
    /// prior `l = 0.1, ν = 1`, blur2d with identity prior.
    pub fn defaults(problem: ProblemKind) -> Self {
        let (n, kernel, noise, level) = match problem {
            ProblemKind::Gravity => {
                (400, Some(KernelSpec::gaussian(0.1).unwrap()), NoiseKind::White, 5e-3)
            }
            ProblemKind::Shaw => {
                (400, Some(KernelSpec::exponential(0.1, 1.0).unwrap()), NoiseKind::Diagonal, 1e-2)
            }
            ProblemKind::Blur2d => (64, None, NoiseKind::White, 1e-2),
        };
        Self {
            schema_version: SCHEMA_VERSION,
            problem,
            n,
            kernel,
            noise,
            level,
            seed: 0,
            rules: vec![StopRule::Dp, StopRule::Lc, StopRule::Gcv, StopRule::BestK],
            tau: 1.01,
            lookahead: 10,
            window: 3,
            k_max: 100,
            oracle: false,
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn unknowns(&self) -> usize {
        match self.problem {
            ProblemKind::Blur2d => self.n * self.n,
            _ => self.n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.k_max < 1 {
            return Err(Error::invalid("k_max must be at least 1"));
        }
        if !(self.tau > 1.0) {
            return Err(Error::invalid(format!("tau must exceed 1, got {}", self.tau)));
        }
        if !(self.level > 0.0) {
            return Err(Error::invalid("noise level must be positive"));
        }
        if self.rules.is_empty() {
            return Err(Error::invalid("at least one stopping rule is required"));
        }
        if self.oracle {
            if self.problem == ProblemKind::Blur2d {
                return Err(Error::invalid(
                    "oracle comparisons require a dense operator; blur2d is matrix-free",
                ));
            }
            if self.unknowns() > ORACLE_DIM_CAP {
                return Err(Error::invalid(format!(
                    "oracle requires n <= {ORACLE_DIM_CAP}, got {}",
                    self.unknowns()
                )));
            }
        }
        Ok(())
    }

    fn stop_config(&self, rule: StopRule) -> StopConfig {
        StopConfig { rule, tau: self.tau, lookahead: self.lookahead, window: self.window }
    }
}

/// Builds the prior covariance, escalating the jitter by 100x (up to
/// `1e-6·amplitude`) when the factorization probe fails. Escalations are
/// logged to stderr.
fn build_prior(points: &[Vec<f64>], spec: &KernelSpec) -> Result<SpdAction> {
    let mut jitter = default_jitter(spec.amplitude);
    let cap = 1e-6 * spec.amplitude;
    loop {
        match build_covariance(points, spec, jitter) {
            Ok(n) => return Ok(n),
            Err(Error::FactorizationFailed { .. }) if jitter < cap => {
                let next = (jitter * 100.0).min(cap);
                eprintln!(
                    "prior covariance factorization failed at jitter {jitter:e}; retrying with {next:e}"
                );
                jitter = next;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Builds the full problem instance described by the config.
pub fn build_problem(config: &ExperimentConfig) -> Result<InverseProblem> {
    let gen = match config.problem {
        ProblemKind::Gravity => gravity_problem(config.n)?,
        ProblemKind::Shaw => shaw_problem(config.n)?,
        ProblemKind::Blur2d => blur2d_problem(config.n, 2.0)?,
    };
    let n_cov = match &config.kernel {
        Some(spec) => build_prior(&gen.points, spec)?,
        None => SpdAction::identity(gen.x_true.len()),
    };
    let (b, m_inv, m) = match config.noise {
        NoiseKind::White => add_noise_white(&gen.b_true, config.level, config.seed)?,
        NoiseKind::Diagonal => add_noise_diagonal(&gen.b_true, config.level, config.seed)?,
    };
    let meta = ProblemMeta {
        name: format!("{:?}", config.problem).to_lowercase(),
        m: gen.b_true.len(),
        n: gen.x_true.len(),
        noise: format!("{:?}", config.noise).to_lowercase(),
        noise_level: config.level,
        seed: config.seed,
    };
    Ok(InverseProblem {
        a: gen.a,
        b,
        b_true: gen.b_true,
        x_true: gen.x_true,
        m_inv,
        m,
        n_cov,
        points: gen.points,
        meta,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub k_stop: usize,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleSummary {
    pub lambda_opt: f64,
    pub tikhonov_error: f64,
    pub at_boundary: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub problem: ProblemMeta,
    pub k_ran: usize,
    pub rules: BTreeMap<String, RuleOutcome>,
    pub best_k: usize,
    pub best_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
}

/// Runs the configured experiment and writes `history.csv`, `summary.json`,
/// and one solution vector per rule (`x_<rule>.vec`) into `output_dir`.
/// On failure every file written so far is removed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    match run_experiment_inner(config, &mut written) {
        Ok(s) => Ok(s),
        Err(e) => {
            for p in written {
                let _ = std::fs::remove_file(p);
            }
            Err(e)
        }
    }
}

fn run_experiment_inner(
    config: &ExperimentConfig,
    written: &mut Vec<PathBuf>,
) -> Result<Summary> {
    let problem = build_problem(config)?;
    let history = run_history(&problem, config.k_max, ReorthPolicy::Full)?;
    if history.records.is_empty() {
        return Err(Error::invalid("bidiagonalization terminated before the first iteration"));
    }

    let csv_path = config.output_dir.join("history.csv");
    io::write_history_csv(&csv_path, &history.records)?;
    written.push(csv_path);

    let mut rules = BTreeMap::new();
    for &rule in &config.rules {
        let idx = select_index(&history, &config.stop_config(rule))?;
        let rec = &history.records[idx];
        rules.insert(
            rule.name().to_string(),
            RuleOutcome { k_stop: rec.k, rel_error: rec.rel_error.unwrap_or(f64::NAN) },
        );
        let vec_path = config.output_dir.join(format!("x_{}.vec", rule.name()));
        io::write_vector(&vec_path, &history.solutions[idx])?;
        written.push(vec_path);
    }

    let (best_k, best_error) = best_of(&history);
    let oracle = if config.oracle { Some(oracle_summary(config, &problem)?) } else { None };

    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        problem: problem.meta.clone(),
        k_ran: history.records.len(),
        rules,
        best_k,
        best_error,
        oracle,
    };
    let json_path = config.output_dir.join("summary.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&summary)?)?;
    written.push(json_path);
    Ok(summary)
}

fn best_of(history: &RunHistory) -> (usize, f64) {
    let mut best_k = history.records[0].k;
    let mut best_err = f64::INFINITY;
    for r in &history.records {
        if let Some(e) = r.rel_error {
            if e < best_err {
                best_err = e;
                best_k = r.k;
            }
        }
    }
    (best_k, best_err)
}

fn oracle_summary(config: &ExperimentConfig, problem: &InverseProblem) -> Result<OracleSummary> {
    let a = problem
        .a
        .as_dense()
        .ok_or_else(|| Error::invalid("oracle comparisons require a dense operator"))?;
    let g = crate::oracle::gsvd_pair(a, &problem.m_inv, &problem.n_cov)?;
    let opt = crate::oracle::optimal_lambda(&g, &problem.b, &problem.x_true)?;
    let _ = config;
    Ok(OracleSummary {
        lambda_opt: opt.lambda,
        tikhonov_error: opt.error / problem.x_true.norm(),
        at_boundary: opt.at_boundary,
    })
}

/// Serializes a problem instance to a directory: `a.mat` (dense operators
/// only), `b.vec`, `b_true.vec`, `x_true.vec`, and `meta.json`.
pub fn save_problem(problem: &InverseProblem, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    if let Some(a) = problem.a.as_dense() {
        io::write_matrix(&dir.join("a.mat"), a)?;
    }
    io::write_vector(&dir.join("b.vec"), &problem.b)?;
    io::write_vector(&dir.join("b_true.vec"), &problem.b_true)?;
    io::write_vector(&dir.join("x_true.vec"), &problem.x_true)?;
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&problem.meta)?)?;
    Ok(())
}
