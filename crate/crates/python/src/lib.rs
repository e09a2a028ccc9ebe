//! Python bindings for scenario loading, channel generation, precoder design,
//! sensing and Monte-Carlo sweeps.

use isac_ee::channel::{steering_vector as steer, ChannelSet};
use isac_ee::config::Scenario;
use isac_ee::harness::{self, aggregate, channel_for_trial, derive_seed, Method, MethodOutcome, Purpose, SweepSpec};
use isac_ee::linalg::{CMat, C64};
use isac_ee::metrics;
use isac_ee::radar::detect_scene;
use isac_ee::system::{Architecture, PrecoderSet, SystemConfig};
use isac_ee::IsacError;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

create_exception!(isac_ee_py, InfeasibleError, PyValueError, "No precoder satisfies the sensing and power constraints.");

fn err(e: IsacError) -> PyErr {
    if e.is_infeasible() {
        InfeasibleError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse<T: std::str::FromStr<Err = IsacError>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn rows(m: &CMat) -> Vec<Vec<C64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<C64>]) -> PyResult<CMat> {
    let n_cols = r.first().map_or(0, Vec::len);
    if r.iter().any(|row| row.len() != n_cols) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(CMat::from_fn(r.len(), n_cols, |i, j| r[i][j]))
}

fn to_py(py: Python<'_>, v: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pyclass(name = "Scenario", module = "isac_ee_py")]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(Self { inner: Scenario::preset(name).map_err(err)? })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { inner: Scenario::from_toml_str(text).map_err(err)? })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(err)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn p_th_grid(&self) -> Vec<f64> {
        self.inner.sensing.p_th_grid.clone()
    }

    #[pyo3(signature = (arch = "fd", n_rf = None))]
    fn system(&self, arch: &str, n_rf: Option<usize>) -> PyResult<PySystem> {
        Ok(PySystem { inner: self.inner.system(parse(arch)?, n_rf).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("Scenario('{}')", self.inner.name)
    }
}

#[pyclass(name = "SystemConfig", module = "isac_ee_py")]
struct PySystem {
    inner: SystemConfig,
}

#[pymethods]
impl PySystem {
    #[getter]
    fn arch(&self) -> &'static str {
        self.inner.architecture.as_str()
    }
    #[getter]
    fn n_tx(&self) -> usize {
        self.inner.n_tx
    }
    #[getter]
    fn n_rf(&self) -> usize {
        self.inner.n_rf
    }
    #[getter]
    fn n_users(&self) -> usize {
        self.inner.n_users
    }
    #[getter]
    fn n_streams(&self) -> usize {
        self.inner.n_streams
    }
    #[getter]
    fn n_sub(&self) -> usize {
        self.inner.n_sub
    }
    #[getter]
    fn p_tx_w(&self) -> f64 {
        self.inner.p_tx_w
    }
    #[getter]
    fn p_th(&self) -> f64 {
        self.inner.p_th
    }

    fn with_p_th(&self, p_th: f64) -> Self {
        Self { inner: self.inner.with_p_th(p_th) }
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }
}

#[pyclass(name = "Channel", module = "isac_ee_py")]
struct PyChannel {
    inner: ChannelSet,
}

#[pymethods]
impl PyChannel {
    /// `H[k][u]` as a list of rows.
    fn matrix(&self, k: usize, u: usize) -> PyResult<Vec<Vec<C64>>> {
        if k >= self.inner.n_sub() || u >= self.inner.n_users() {
            return Err(PyValueError::new_err("subcarrier or user index out of range"));
        }
        Ok(rows(self.inner.get(k, u)))
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.n_sub(), self.inner.n_users(), self.inner.n_tx())
    }
}

#[pyclass(name = "Design", module = "isac_ee_py")]
struct PyDesign {
    inner: MethodOutcome,
}

#[pymethods]
impl PyDesign {
    #[getter]
    fn ee(&self) -> f64 {
        self.inner.ee
    }
    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate
    }
    #[getter]
    fn power(&self) -> f64 {
        self.inner.power
    }
    #[getter]
    fn mask(&self) -> Vec<bool> {
        self.inner.mask.active().to_vec()
    }
    #[getter]
    fn match_residual(&self) -> Option<f64> {
        self.inner.match_residual
    }

    /// Fully-digital equivalent precoder on subcarrier `k`.
    fn precoder(&self, k: usize) -> PyResult<Vec<Vec<C64>>> {
        let mats = self.inner.effective.mats();
        mats.get(k).map(rows).ok_or_else(|| PyValueError::new_err("subcarrier index out of range"))
    }

    fn radiated_power(&self) -> f64 {
        self.inner.effective.frob_sq()
    }

    fn __repr__(&self) -> String {
        format!("Design(ee={:.4}, rate={:.4}, power={:.4}, mask={})", self.inner.ee, self.inner.rate, self.inner.power, self.inner.mask)
    }
}

/// Array response of an `n_elem` ULA toward `theta_rad`.
#[pyfunction]
#[pyo3(signature = (theta_rad, n_elem, spacing = 0.5, freq_hz = 1.0, carrier_hz = 1.0))]
fn steering_vector(theta_rad: f64, n_elem: usize, spacing: f64, freq_hz: f64, carrier_hz: f64) -> PyResult<Vec<C64>> {
    Ok(steer(freq_hz, carrier_hz, theta_rad, n_elem, spacing).map_err(err)?.iter().copied().collect())
}

/// Channel draw `trial` of the stream seeded by `seed`.
#[pyfunction]
#[pyo3(signature = (scenario, config, seed = 1, trial = 0))]
fn channel(scenario: &PyScenario, config: &PySystem, seed: u64, trial: u64) -> PyResult<PyChannel> {
    Ok(PyChannel { inner: channel_for_trial(&scenario.inner, &config.inner, seed, trial).map_err(err)? })
}

/// Designs a precoder with `method` (proposed, greedy, brute, random, all-on).
#[pyfunction]
#[pyo3(signature = (scenario, config, channel, method = "proposed", seed = 0))]
fn optimize(py: Python<'_>, scenario: &PyScenario, config: &PySystem, channel: &PyChannel, method: &str, seed: u64) -> PyResult<PyDesign> {
    let method: Method = parse(method)?;
    let out = py
        .detach(|| harness::run_method(&config.inner, &channel.inner, method, &scenario.inner.optimizer, seed))
        .map_err(err)?;
    Ok(PyDesign { inner: out })
}

/// Average spectral efficiency of `precoder` given as one row list per subcarrier.
#[pyfunction]
fn spectral_efficiency(config: &PySystem, channel: &PyChannel, precoder: Vec<Vec<Vec<C64>>>, noise_var: f64) -> PyResult<f64> {
    let mats = precoder.iter().map(|m| from_rows(m)).collect::<PyResult<Vec<_>>>()?;
    let f = PrecoderSet::new(mats, config.inner.n_streams).map_err(err)?;
    metrics::spectral_efficiency(&channel.inner, &f, noise_var).map_err(err)
}

/// Radar Monte-Carlo on the design's effective precoder; returns a summary dict.
#[pyfunction]
#[pyo3(signature = (scenario, config, design, trials = 100, seed = 1))]
fn sense(py: Python<'_>, scenario: &PyScenario, config: &PySystem, design: &PyDesign, trials: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let sc = &scenario.inner;
    let cfg = &config.inner;
    let out = py
        .detach(|| -> isac_ee::Result<_> {
            let scene = sc.scene(cfg.architecture)?;
            let grid = sc.angle_grid()?;
            let cfar = sc.cfar(cfg.p_fa)?;
            detect_scene(&design.inner.effective, &scene, &grid, &cfar, cfg, derive_seed(seed, 0, Purpose::Sensing), trials)
        })
        .map_err(err)?;
    let summary = serde_json::json!({
        "p_d": out.p_d, "p_fa": out.p_fa, "hits": out.hits, "targets": out.targets,
        "false_alarms": out.false_alarms, "noise_cells": out.noise_cells, "trials": out.trials,
    });
    to_py(py, &summary)
}

/// Monte-Carlo sweep; returns the aggregate rows as dicts.
#[pyfunction]
#[pyo3(signature = (scenario, arch = "fd", methods = vec!["proposed".to_string()], p_th_grid = None, trials = 10, seed = 1, sensing_trials = 0, n_rf = None))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    py: Python<'_>,
    scenario: &PyScenario,
    arch: &str,
    methods: Vec<String>,
    p_th_grid: Option<Vec<f64>>,
    trials: usize,
    seed: u64,
    sensing_trials: usize,
    n_rf: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let arch: Architecture = parse(arch)?;
    let methods = methods.iter().map(|m| parse(m)).collect::<PyResult<Vec<Method>>>()?;
    let spec = SweepSpec {
        arch,
        n_rf,
        methods,
        p_th_grid: p_th_grid.unwrap_or_else(|| scenario.inner.sensing.p_th_grid.clone()),
        trials,
        seed,
        sensing_trials,
    };
    let rows = py
        .detach(|| harness::run_sweep(&scenario.inner, &spec).and_then(|r| aggregate(&r.records)))
        .map_err(err)?;
    to_py(py, &rows)
}

#[pymodule]
fn isac_ee_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PySystem>()?;
    m.add_class::<PyChannel>()?;
    m.add_class::<PyDesign>()?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add_function(wrap_pyfunction!(steering_vector, m)?)?;
    m.add_function(wrap_pyfunction!(channel, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(sense, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
