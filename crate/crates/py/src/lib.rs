//! Python bindings: configs, single runs, a steppable learner, the
//! imitation model and the metrics reader.

use std::path::PathBuf;

use advice_reuse::advising::{ActionSource, Learner, StudentMode};
use advice_reuse::harness::{self, build_run, Profile, RunConfig};
use advice_reuse::imitation::{self, AdviceBuffer, ImitationConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Serializable value to a Python object via the `json` module.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn source_name(source: ActionSource) -> &'static str {
    match source {
        ActionSource::CollectedAdvice => "collected_advice",
        ActionSource::ReusedAdvice => "reused_advice",
        ActionSource::SelfPolicy => "self_policy",
    }
}

#[pyclass(name = "RunConfig", module = "pyadvice", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    /// Desk profile, optionally at a custom scale.
    #[staticmethod]
    #[pyo3(signature = (scale = None))]
    fn desk(scale: Option<f64>) -> Self {
        Self {
            inner: RunConfig::for_profile(Profile::Desk, scale),
        }
    }

    #[staticmethod]
    fn full() -> Self {
        Self {
            inner: RunConfig::full(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        RunConfig::from_toml_str(text).map(|inner| Self { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        RunConfig::load(path).map(|inner| Self { inner }).map_err(value_err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode().label()
    }

    #[setter]
    fn set_mode(&mut self, mode: &str) -> PyResult<()> {
        self.inner.advising.mode = mode.parse::<StudentMode>().map_err(value_err)?;
        Ok(())
    }

    #[getter]
    fn total_steps(&self) -> u64 {
        self.inner.total_steps
    }

    #[setter]
    fn set_total_steps(&mut self, steps: u64) {
        self.inner.total_steps = steps;
    }

    #[getter]
    fn budget(&self) -> u64 {
        self.inner.budget
    }

    #[setter]
    fn set_budget(&mut self, budget: u64) {
        self.inner.budget = budget;
    }

    #[getter]
    fn eval_period(&self) -> u64 {
        self.inner.eval_period
    }

    #[setter]
    fn set_eval_period(&mut self, period: u64) {
        self.inner.eval_period = period;
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(env={}, mode={}, seed={}, total_steps={}, budget={})",
            self.inner.env.name.name(),
            self.inner.mode(),
            self.inner.seed,
            self.inner.total_steps,
            self.inner.budget
        )
    }
}

/// Steppable training loop for one student.
#[pyclass(name = "Learner", module = "pyadvice", unsendable)]
struct PyLearner {
    inner: Learner,
}

#[pymethods]
impl PyLearner {
    #[new]
    fn new(config: &PyRunConfig) -> PyResult<Self> {
        let parts = build_run(&config.inner).map_err(value_err)?;
        Ok(Self { inner: parts.learner })
    }

    /// Advances one environment step and describes it.
    fn step<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = self.inner.step().map_err(runtime_err)?;
        let d = PyDict::new(py);
        d.set_item("t", r.t)?;
        d.set_item("action", r.action)?;
        d.set_item("source", source_name(r.source))?;
        d.set_item("reward", r.reward)?;
        d.set_item("episode_over", r.episode_over)?;
        d.set_item("reuse_hit", r.reuse_hit)?;
        d.set_item("imitation_trained", r.imitation_trained)?;
        Ok(d)
    }

    /// Steps `n` times and returns the totals.
    fn run_steps<'py>(&mut self, py: Python<'py>, n: u64) -> PyResult<Bound<'py, PyAny>> {
        for _ in 0..n {
            self.inner.step().map_err(runtime_err)?;
        }
        self.totals(py)
    }

    fn totals<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.totals())
    }

    #[getter]
    fn t(&self) -> u64 {
        self.inner.t()
    }

    #[getter]
    fn tau(&self) -> Option<f64> {
        self.inner.advisor().tau()
    }

    #[getter]
    fn budget_remaining(&self) -> u64 {
        self.inner.channel().ledger().remaining()
    }

    #[getter]
    fn buffer_size(&self) -> usize {
        self.inner.advisor().buffer().len()
    }

    /// Greedy Q-values of the student at `state`.
    fn q_values(&self, state: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.student().q_values(&state).map_err(value_err)
    }
}

/// Dropout classifier over advised state-action pairs, with its own buffer.
#[pyclass(name = "ImitationModel", module = "pyadvice", unsendable)]
struct PyImitationModel {
    model: imitation::ImitationModel,
    buffer: AdviceBuffer,
    batch_size: usize,
}

#[pymethods]
impl PyImitationModel {
    #[new]
    #[pyo3(signature = (observation_dim, action_count, seed = 0, hidden = vec![64], dropout = 0.35, mc_passes = 100, percentile = 90.0, learning_rate = 1e-3, batch_size = 32))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        observation_dim: usize,
        action_count: usize,
        seed: u64,
        hidden: Vec<usize>,
        dropout: f64,
        mc_passes: usize,
        percentile: f64,
        learning_rate: f64,
        batch_size: usize,
    ) -> PyResult<Self> {
        let config = ImitationConfig {
            hidden_layers: hidden,
            dropout_rate: dropout,
            mc_passes,
            percentile,
            learning_rate,
            batch_size,
            ..ImitationConfig::default()
        };
        let model = imitation::ImitationModel::new(&config, observation_dim, action_count, seed, seed ^ 1, seed ^ 2)
            .map_err(value_err)?;
        Ok(Self {
            model,
            buffer: AdviceBuffer::new(),
            batch_size,
        })
    }

    fn add(&mut self, state: Vec<f64>, action: usize) {
        self.buffer.push(state, action);
    }

    /// Minibatch steps on the buffer; returns the per-step losses.
    fn train(&mut self, iterations: usize) -> PyResult<Vec<f64>> {
        self.model
            .train(&mut self.buffer, iterations, self.batch_size, 0)
            .map_err(runtime_err)
    }

    /// Sets τ from the correctly classified buffer pairs.
    fn tune(&mut self) -> PyResult<Option<f64>> {
        self.model.tune_threshold(&self.buffer).map_err(runtime_err)
    }

    fn uncertainty(&mut self, state: Vec<f64>) -> PyResult<f64> {
        self.model.uncertainty(&state).map_err(value_err)
    }

    fn predict(&self, state: Vec<f64>) -> PyResult<usize> {
        self.model.predict_action(&state).map_err(value_err)
    }

    fn probabilities(&self, state: Vec<f64>) -> PyResult<Vec<f64>> {
        self.model.probabilities(&state).map_err(value_err)
    }

    #[getter]
    fn tau(&self) -> Option<f64> {
        self.model.tau()
    }

    fn __len__(&self) -> usize {
        self.buffer.len()
    }
}

/// Trains one student and writes its metrics into `out_dir`; returns the summary.
#[pyfunction]
fn run<'py>(py: Python<'py>, config: &PyRunConfig, out_dir: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let summary = py.detach(|| harness::run(&config.inner, &out_dir)).map_err(runtime_err)?;
    to_py(py, &summary)
}

#[pyfunction]
fn read_metrics<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let rows = harness::read_metrics(path).map_err(runtime_err)?;
    to_py(py, &rows)
}

/// Nearest-rank percentile used for τ.
#[pyfunction]
fn threshold(uncertainties: Vec<f64>, percentile: f64) -> Option<f64> {
    imitation::threshold_from_uncertainties(uncertainties, percentile)
}

#[pyfunction]
fn modes() -> Vec<&'static str> {
    StudentMode::ALL.iter().map(|m| m.label()).collect()
}

#[pymodule]
fn pyadvice(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyLearner>()?;
    m.add_class::<PyImitationModel>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(read_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(modes, m)?)?;
    Ok(())
}
