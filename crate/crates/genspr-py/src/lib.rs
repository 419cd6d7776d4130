//! Python bindings: build seeded test problems, run the solver with a chosen
//! stopping rule, and inspect the per-iteration history.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use genspr::experiment::{build_problem, ExperimentConfig, ProblemKind};
use genspr::kernels::{KernelFamily, KernelSpec};
use genspr::problems::InverseProblem;
use genspr::spr::solve;
use genspr::stopping::{StopConfig, StopRule};

fn to_py_err(e: genspr::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A seeded inverse problem instance (gravity, shaw, or blur2d).
#[pyclass(name = "Problem")]
pub struct PyProblem {
    inner: InverseProblem,
}

#[pymethods]
impl PyProblem {
    /// Problem(name, n, *, noise="white", level=5e-3, seed=0, kernel="default", l=0.1, nu=1.0)
    #[new]
    #[pyo3(signature = (name, n, noise=None, level=None, seed=0, kernel=None, l=None, nu=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        name: &str,
        n: usize,
        noise: Option<&str>,
        level: Option<f64>,
        seed: u64,
        kernel: Option<&str>,
        l: Option<f64>,
        nu: Option<f64>,
    ) -> PyResult<Self> {
        let kind: ProblemKind = name.parse().map_err(to_py_err)?;
        let mut cfg = ExperimentConfig::defaults(kind);
        cfg.n = n;
        cfg.seed = seed;
        if let Some(noise) = noise {
            cfg.noise = noise.parse().map_err(to_py_err)?;
        }
        if let Some(level) = level {
            cfg.level = level;
        }
        if let Some(kernel) = kernel {
            cfg.kernel = match kernel {
                "none" => None,
                "gaussian" | "exponential" | "matern" => {
                    let family = match kernel {
                        "gaussian" => KernelFamily::Gaussian,
                        "exponential" => KernelFamily::Exponential,
                        _ => KernelFamily::Matern,
                    };
                    Some(
                        KernelSpec::new(family, l.unwrap_or(0.1), nu.unwrap_or(1.0))
                            .map_err(to_py_err)?,
                    )
                }
                other => {
                    return Err(PyValueError::new_err(format!(
                        "unknown kernel '{other}' (expected gaussian, exponential, matern, none)"
                    )))
                }
            };
        }
        let inner = build_problem(&cfg).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.a.nrows()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.a.ncols()
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.b.iter().copied().collect()
    }

    #[getter]
    fn x_true(&self) -> Vec<f64> {
        self.inner.x_true.iter().copied().collect()
    }

    /// solve(rule="dp", tau=1.01, k_max=100) -> SolveResult
    #[pyo3(signature = (rule="dp", tau=1.01, k_max=100))]
    fn solve(&self, rule: &str, tau: f64, k_max: usize) -> PyResult<PySolveResult> {
        let rule: StopRule = rule.parse().map_err(to_py_err)?;
        let mut cfg = StopConfig::new(rule);
        cfg.tau = tau;
        let res = solve(&self.inner, &cfg, k_max).map_err(to_py_err)?;
        let x_true_norm = self.inner.x_true.norm();
        let rel_error = (&res.x_final - &self.inner.x_true).norm() / x_true_norm;
        Ok(PySolveResult {
            x: res.x_final.iter().copied().collect(),
            k_stop: res.k_stop,
            rule: res.rule.name().to_string(),
            termination: format!("{:?}", res.termination).to_lowercase(),
            rel_error,
            phi_bars: res.history.iter().map(|r| r.phi_bar).collect(),
            sol_norms: res.history.iter().map(|r| r.sol_norm).collect(),
            rel_errors: res.history.iter().map(|r| r.rel_error).collect(),
        })
    }
}

/// Outcome of one solver run.
#[pyclass(name = "SolveResult")]
pub struct PySolveResult {
    #[pyo3(get)]
    x: Vec<f64>,
    #[pyo3(get)]
    k_stop: usize,
    #[pyo3(get)]
    rule: String,
    #[pyo3(get)]
    termination: String,
    #[pyo3(get)]
    rel_error: f64,
    /// Residual norms `φ̄_{k+1}` per iteration.
    #[pyo3(get)]
    phi_bars: Vec<f64>,
    /// Solution norms `‖x_k‖_{N⁻¹}` per iteration.
    #[pyo3(get)]
    sol_norms: Vec<f64>,
    #[pyo3(get)]
    rel_errors: Vec<Option<f64>>,
}

#[pymethods]
impl PySolveResult {
    fn __repr__(&self) -> String {
        format!(
            "SolveResult(rule='{}', k_stop={}, rel_error={:.4e}, termination='{}')",
            self.rule, self.k_stop, self.rel_error, self.termination
        )
    }
}

/// Evaluate a covariance kernel at distance r.
#[pyfunction]
#[pyo3(signature = (family, r, l=0.1, nu=1.0))]
fn kernel_eval(family: &str, r: f64, l: f64, nu: f64) -> PyResult<f64> {
    let family = match family {
        "gaussian" => KernelFamily::Gaussian,
        "exponential" => KernelFamily::Exponential,
        "matern" => KernelFamily::Matern,
        other => return Err(PyValueError::new_err(format!("unknown kernel '{other}'"))),
    };
    let spec = KernelSpec::new(family, l, nu).map_err(to_py_err)?;
    Ok(genspr::kernels::kernel_eval(&spec, r))
}

#[pymodule]
fn genspr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(kernel_eval, m)?)?;
    Ok(())
}
