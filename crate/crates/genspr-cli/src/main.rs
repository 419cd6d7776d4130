//! `genspr` command line interface.
//!
//! `genspr run` builds a seeded test problem, runs the solver under the
//! requested stopping rules, and writes history.csv / summary.json / solution
//! vectors. `genspr oracle` additionally runs the dense GSVD-based
//! verification suite on a desk-scale problem and prints the comparisons.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use genspr::error::{Error, Result};
use genspr::experiment::{build_problem, run_experiment, ExperimentConfig, ProblemKind};
use genspr::gengkb::{GenGkbState, ReorthPolicy};
use genspr::kernels::{KernelFamily, KernelSpec};
use genspr::oracle;
use genspr::spr::run_history;
use genspr::stopping::StopRule;

#[derive(Parser)]
#[command(name = "genspr", version, about = "Iterative regularization experiment runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment and write reports to the output directory.
    Run(RunArgs),
    /// Run an experiment plus the dense verification comparisons (n <= 2000).
    Oracle(RunArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// JSON config file; command line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// gravity | shaw | blur2d
    #[arg(long)]
    problem: Option<String>,
    /// Grid size (side length n1 for blur2d).
    #[arg(long)]
    n: Option<usize>,
    /// Prior kernel family: gaussian | exponential | matern | none
    #[arg(long)]
    kernel: Option<String>,
    /// Kernel length-scale.
    #[arg(long)]
    l: Option<f64>,
    /// Kernel smoothness (Matérn order or exponential exponent).
    #[arg(long)]
    nu: Option<f64>,
    /// white | diagonal
    #[arg(long)]
    noise: Option<String>,
    /// Relative noise level.
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stopping rule (repeatable): dp | lc | gcv | best-k | none
    #[arg(long = "rule")]
    rules: Vec<String>,
    /// Discrepancy principle safety factor (> 1).
    #[arg(long)]
    tau: Option<f64>,
    /// Maximum number of iterations.
    #[arg(long)]
    kmax: Option<usize>,
    /// Also run the dense oracle comparisons.
    #[arg(long)]
    oracle: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Merges config-file values and flag overrides into a validated config.
/// Precedence: flag > config file > problem defaults.
fn build_config(args: &RunArgs, force_oracle: bool) -> Result<ExperimentConfig> {
    let mut cfg = if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str::<ExperimentConfig>(&text)?
    } else {
        let problem: ProblemKind = args
            .problem
            .as_deref()
            .ok_or_else(|| Error::invalid("--problem is required (or use --config)"))?
            .parse()?;
        ExperimentConfig::defaults(problem)
    };
    if let Some(p) = &args.problem {
        let kind: ProblemKind = p.parse()?;
        if args.config.is_none() {
            // defaults already chosen from this kind
        } else if kind != cfg.problem {
            let fresh = ExperimentConfig::defaults(kind);
            cfg.problem = kind;
            cfg.kernel = fresh.kernel;
            cfg.n = fresh.n;
        }
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(k) = &args.kernel {
        cfg.kernel = match k.as_str() {
            "none" => None,
            name => {
                let family = match name {
                    "gaussian" => KernelFamily::Gaussian,
                    "exponential" => KernelFamily::Exponential,
                    "matern" => KernelFamily::Matern,
                    other => {
                        return Err(Error::invalid(format!(
                            "unknown kernel '{other}' (expected gaussian, exponential, matern, none)"
                        )))
                    }
                };
                let base = cfg.kernel;
                let l = args.l.or(base.map(|s| s.l)).unwrap_or(0.1);
                let nu = args.nu.or(base.map(|s| s.nu)).unwrap_or(1.0);
                Some(KernelSpec::new(family, l, nu)?)
            }
        };
    } else if args.l.is_some() || args.nu.is_some() {
        if let Some(base) = cfg.kernel {
            cfg.kernel = Some(KernelSpec::new(
                base.family,
                args.l.unwrap_or(base.l),
                args.nu.unwrap_or(base.nu),
            )?);
        } else {
            return Err(Error::invalid("--l/--nu given but no kernel is configured"));
        }
    }
    if let Some(noise) = &args.noise {
        cfg.noise = noise.parse()?;
    }
    if let Some(level) = args.level {
        cfg.level = level;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if !args.rules.is_empty() {
        cfg.rules = args
            .rules
            .iter()
            .map(|r| r.parse::<StopRule>())
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(tau) = args.tau {
        cfg.tau = tau;
    }
    if let Some(kmax) = args.kmax {
        cfg.k_max = kmax;
    }
    if args.oracle || force_oracle {
        cfg.oracle = true;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = build_config(args, false)?;
    let summary = run_experiment(&cfg)?;
    println!("problem: {} (m = {}, n = {})", summary.problem.name, summary.problem.m, summary.problem.n);
    println!("iterations run: {}", summary.k_ran);
    println!("best: k = {}, rel_error = {:.4e}", summary.best_k, summary.best_error);
    for (rule, out) in &summary.rules {
        println!("{rule}: k_stop = {}, rel_error = {:.4e}", out.k_stop, out.rel_error);
    }
    if let Some(orc) = &summary.oracle {
        println!(
            "tikhonov oracle: lambda = {:.4e}, rel_error = {:.4e}{}",
            orc.lambda_opt,
            orc.tikhonov_error,
            if orc.at_boundary { " (boundary)" } else { "" }
        );
    }
    println!("reports written to {}", cfg.output_dir.display());
    Ok(())
}

/// Dense verification: runs the experiment with oracle comparisons, then
/// prints Ritz convergence and solution-subspace distances against the GSVD.
fn cmd_oracle(args: &RunArgs) -> Result<()> {
    let cfg = build_config(args, true)?;
    let summary = run_experiment(&cfg)?;
    println!("problem: {} (m = {}, n = {})", summary.problem.name, summary.problem.m, summary.problem.n);
    println!("best: k = {}, rel_error = {:.4e}", summary.best_k, summary.best_error);
    if let Some(orc) = &summary.oracle {
        println!(
            "tikhonov oracle: lambda = {:.4e}, rel_error = {:.4e}{}",
            orc.lambda_opt,
            orc.tikhonov_error,
            if orc.at_boundary { " (boundary)" } else { "" }
        );
    }

    let problem = build_problem(&cfg)?;
    let a = problem
        .a
        .as_dense()
        .ok_or_else(|| Error::invalid("oracle requires a dense operator"))?;
    let g = oracle::gsvd_pair(a, &problem.m_inv, &problem.n_cov)?;
    println!("gsvd: rank r = {}, gamma_1 = {:.6e}", g.r, g.gamma[0]);

    let k_probe = cfg.k_max.min(30);
    let mut st = GenGkbState::init(
        problem.a.as_ref(),
        &problem.b,
        &problem.m_inv,
        &problem.n_cov,
        ReorthPolicy::Full,
    )?;
    for _ in 0..k_probe {
        if st.terminated {
            break;
        }
        st.step(problem.a.as_ref(), &problem.m_inv, &problem.n_cov)?;
    }
    let steps = st.steps();
    if steps >= 1 {
        let theta1 = oracle::ritz_values(&st.bidiagonal(steps))?[0];
        let rel = ((theta1 * theta1) - g.gamma[0] * g.gamma[0]).abs() / (g.gamma[0] * g.gamma[0]);
        println!("ritz: theta_1^2 vs gamma_1^2 at k = {steps}: relative gap {rel:.3e}");
    }
    for k in 1..=5.min(steps) {
        let dk = oracle::delta_k_distance(&g, &problem.b, k)?;
        let direct = oracle::subspace_distance(
            &st.v_matrix(k),
            &g.z.columns(0, k).into_owned(),
            &problem.n_cov,
        )?;
        println!(
            "subspace distance k = {k}: closed-form {:.6e}, direct {:.6e}{}",
            dk.distance,
            direct,
            if dk.ill_conditioned { " (ill-conditioned)" } else { "" }
        );
    }
    let _ = run_history(&problem, 1, ReorthPolicy::Full)?; // warm sanity pass
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Oracle(args) => cmd_oracle(args),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
