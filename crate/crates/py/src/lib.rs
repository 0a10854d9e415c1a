//! Python bindings for `explgame-core`.

use std::path::PathBuf;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;

use explgame_core::attack::{evaluate_mia as core_evaluate_mia, LabeledVariances};
use explgame_core::beliefs::{update_belief_with, BayesRule, BeliefState};
use explgame_core::cli::config::{resolve_key, RunConfig};
use explgame_core::cli::CliError;
use explgame_core::cutoffs::Thresholds;
use explgame_core::equilibrium::{run_game as core_run_game, GameConfig};
use explgame_core::gbm::{fit_mle, progress_cdf, simulate_path, transition_density, GbmParams, VariancePath};
use explgame_core::hjb::characteristic_roots;
use explgame_core::GameError;

fn model_err(e: GameError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cli_err(e: CliError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// GBM for the explanation variance.
#[pyclass(name = "Gbm", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyGbm {
    inner: GbmParams,
}

#[pymethods]
impl PyGbm {
    #[new]
    fn new(mu: f64, sigma: f64, x0: f64) -> PyResult<Self> {
        Ok(Self {
            inner: GbmParams::new(mu, sigma, x0).map_err(model_err)?,
        })
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn x0(&self) -> f64 {
        self.inner.x0
    }

    /// Exact simulation; returns `n_steps + 1` values starting at `x0`.
    #[pyo3(signature = (n_steps, dt=1.0, seed=0))]
    fn simulate(&self, n_steps: usize, dt: f64, seed: u64) -> PyResult<Vec<f64>> {
        Ok(simulate_path(&self.inner, n_steps, dt, seed)
            .map_err(model_err)?
            .values()
            .to_vec())
    }

    fn transition_density(&self, x_from: f64, x_to: f64, dt: f64) -> PyResult<f64> {
        transition_density(&self.inner, x_from, x_to, dt).map_err(model_err)
    }

    fn progress_cdf(&self, x_t0: f64, x_t: f64, dt: f64) -> PyResult<f64> {
        progress_cdf(&self.inner, x_t0, x_t, dt).map_err(model_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Gbm(mu={}, sigma={}, x0={})",
            self.inner.mu, self.inner.sigma, self.inner.x0
        )
    }
}

/// Estimates GBM parameters from an observed series.
#[pyfunction]
fn fit(times: Vec<f64>, values: Vec<f64>) -> PyResult<PyGbm> {
    let path = VariancePath::new(times, values).map_err(model_err)?;
    Ok(PyGbm {
        inner: fit_mle(&path).map_err(model_err)?,
    })
}

/// Game configuration. Starts from the baseline; change values with `set`.
#[pyclass(name = "Config", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: GameConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self {
            inner: GameConfig::default(),
        }
    }

    /// Loads the game part of a TOML run configuration.
    #[staticmethod]
    fn from_toml(path: PathBuf) -> PyResult<Self> {
        let cfg = RunConfig::load(&path).map_err(cli_err)?;
        Ok(Self {
            inner: cfg.game_config().map_err(cli_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("config serializes")
    }

    /// Sets one numeric key, e.g. `"sigma"` or `"payoffs.k"`.
    fn set(&mut self, key: &str, value: f64) -> PyResult<()> {
        let full = resolve_key(key).map_err(|e| PyKeyError::new_err(e.to_string()))?;
        let path: Vec<&str> = full.strip_prefix("game.").unwrap_or(full).split('.').collect();
        let mut doc = serde_json::to_value(&self.inner).expect("config serializes");
        let slot = path
            .iter()
            .try_fold(&mut doc, |node, part| node.get_mut(*part))
            .ok_or_else(|| PyKeyError::new_err(format!("'{key}' is not a game parameter")))?;
        *slot = if slot.is_u64() {
            if !(value >= 0.0 && value.fract() == 0.0) {
                return Err(PyValueError::new_err(format!(
                    "'{key}' needs a non-negative integer, got {value}"
                )));
            }
            serde_json::Value::from(value as u64)
        } else {
            serde_json::Value::from(value)
        };
        self.inner = serde_json::from_value(doc).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!("Config({})", self.to_json())
    }
}

/// `(beta1, beta2)` for the configured GBM and discount rate.
#[pyfunction]
fn roots(config: &PyConfig) -> PyResult<(f64, f64)> {
    let r = characteristic_roots(&config.inner.gbm, &config.inner.payoffs).map_err(model_err)?;
    Ok((r.beta1, r.beta2))
}

/// `(u_th, l_th)` for a configuration.
#[pyfunction]
fn thresholds(config: &PyConfig) -> PyResult<(f64, f64)> {
    let c = &config.inner;
    let roots = characteristic_roots(&c.gbm, &c.payoffs).map_err(model_err)?;
    let t = Thresholds::compute(&roots, &c.gbm, &c.payoffs, c.lth_slack).map_err(model_err)?;
    Ok((t.u_th, t.l_th))
}

/// One belief update given the likelihood ratio `r`.
#[pyfunction]
#[pyo3(signature = (pi, r, standard=false))]
fn update_belief(pi: f64, r: f64, standard: bool) -> PyResult<f64> {
    let rule = if standard {
        BayesRule::Standard
    } else {
        BayesRule::Verbatim
    };
    let prior = BeliefState::new(pi).map_err(model_err)?;
    Ok(update_belief_with(prior, r, rule).map_err(model_err)?.pi)
}

/// Result of one game.
#[pyclass(name = "Outcome", frozen)]
struct PyOutcome {
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    pi_star: Option<f64>,
    #[pyo3(get)]
    u_th: f64,
    #[pyo3(get)]
    l_th: f64,
    #[pyo3(get)]
    blocked_at: Option<usize>,
    #[pyo3(get)]
    stopped_at: Option<usize>,
    #[pyo3(get)]
    pi: Vec<f64>,
    #[pyo3(get)]
    ex_sy: Vec<f64>,
    #[pyo3(get)]
    ex_eu: Vec<f64>,
    #[pyo3(get)]
    pi_grid: Vec<f64>,
    #[pyo3(get)]
    u: Vec<f64>,
    #[pyo3(get)]
    lplus: Vec<f64>,
    #[pyo3(get)]
    lminus: Vec<f64>,
    #[pyo3(get)]
    l: Vec<f64>,
    report: String,
}

#[pymethods]
impl PyOutcome {
    /// Full report as JSON.
    fn report_json(&self) -> String {
        self.report.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Outcome(converged={}, pi_star={:?}, u_th={}, l_th={})",
            self.converged, self.pi_star, self.u_th, self.l_th
        )
    }
}

#[pyfunction]
#[pyo3(signature = (config=None))]
fn run_game(py: Python<'_>, config: Option<&PyConfig>) -> PyResult<PyOutcome> {
    let cfg = config.map_or_else(GameConfig::default, |c| c.inner.clone());
    let out = py.detach(|| core_run_game(&cfg)).map_err(model_err)?;
    Ok(PyOutcome {
        converged: out.report.converged,
        pi_star: out.report.pi_star,
        u_th: out.thresholds.u_th,
        l_th: out.thresholds.l_th,
        blocked_at: out.trace.blocked_at,
        stopped_at: out.trace.stopped_at,
        report: serde_json::to_string(&out.report).expect("report serializes"),
        pi: out.trace.pi,
        ex_sy: out.trace.ex_sy,
        ex_eu: out.trace.ex_eu,
        pi_grid: out.curves.pi_grid,
        u: out.curves.u,
        lplus: out.curves.lplus,
        lminus: out.curves.lminus,
        l: out.curves.l,
    })
}

/// Threshold membership attack; returns `(tp, fn, tpr)`.
#[pyfunction]
fn evaluate_mia(values: Vec<f64>, is_member: Vec<bool>, threshold: f64) -> PyResult<(usize, usize, f64)> {
    let data = LabeledVariances::new(values, is_member).map_err(model_err)?;
    let r = core_evaluate_mia(&data, threshold).map_err(model_err)?;
    Ok((r.tp, r.fn_, r.tpr))
}

#[pymodule]
fn explgame(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGbm>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyOutcome>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(roots, m)?)?;
    m.add_function(wrap_pyfunction!(thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(update_belief, m)?)?;
    m.add_function(wrap_pyfunction!(run_game, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_mia, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
