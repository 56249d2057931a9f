//! Python bindings: `import ikesim`.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use ikesim::engine::{plan_handshake, EngineConfig, PreparedHandshake};
use ikesim::harness::{self, BatchOptions, SimSettings, SuiteSelection};
use ikesim::metrics::{self, RunRecord};
use ikesim::netsim::{self, LinkParams, LossModel};
use ikesim::suite::{self, CryptoSuite, OpaqueMaterial};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn suite_named(name: &str) -> PyResult<CryptoSuite> {
    match name {
        "classical" => Ok(suite::classical_suite()),
        "qrc" => Ok(suite::qrc_suite()),
        other => Err(PyValueError::new_err(format!(
            "unknown suite {other:?} (expected classical or qrc)"
        ))),
    }
}

fn selection(name: &str) -> PyResult<SuiteSelection> {
    match name {
        "classical" => Ok(SuiteSelection::Classical),
        "qrc" => Ok(SuiteSelection::Qrc),
        "both" => Ok(SuiteSelection::Both),
        "custom" => Ok(SuiteSelection::Custom),
        other => Err(PyValueError::new_err(format!("unknown suite selection {other:?}"))),
    }
}

fn loss_model(loss_rate: Option<f64>, p: Option<f64>, r: Option<f64>) -> PyResult<LossModel> {
    let model = match (loss_rate, p, r) {
        (Some(rate), None, None) => LossModel::Uniform { rate },
        (None, Some(p), Some(r)) => LossModel::GilbertElliott { p, r },
        (None, None, None) => LossModel::Uniform { rate: 0.0 },
        _ => return Err(PyValueError::new_err("give either loss_rate or both p and r")),
    };
    model.loss_rate().map_err(value_err)?;
    Ok(model)
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn record_dict<'py>(py: Python<'py>, r: &RunRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("scenario_id", &r.scenario_id)?;
    d.set_item("suite", &r.suite)?;
    d.set_item("iteration", r.iteration)?;
    d.set_item("seed", r.seed)?;
    d.set_item("loss_rate", r.loss_rate)?;
    d.set_item("rtt_ms", r.rtt_ms)?;
    d.set_item("success", r.success)?;
    d.set_item("setup_time_ms", r.setup_time_ms)?;
    d.set_item("total_bytes", r.total_bytes)?;
    d.set_item("datagrams", r.datagrams)?;
    d.set_item("retransmissions", r.retransmissions)?;
    d.set_item("restarts", r.restarts)?;
    d.set_item("error", r.error.as_deref())?;
    Ok(d)
}

/// Steady-state loss P / (P + R) of a two-state burst-loss channel.
#[pyfunction]
fn steady_state_loss(p: f64, r: f64) -> PyResult<f64> {
    netsim::steady_state_loss(p, r).map_err(value_err)
}

/// Nearest-rank percentile.
#[pyfunction]
fn percentile(samples: Vec<f64>, p: f64) -> PyResult<f64> {
    metrics::percentile(&samples, p).map_err(value_err)
}

/// Empirical CDF as a list of (value, fraction) steps.
#[pyfunction]
fn ecdf(samples: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    metrics::ecdf(&samples).map_err(value_err)
}

#[pyfunction]
fn pearson(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    metrics::pearson(&a, &b).map_err(value_err)
}

/// Built-in link presets as a list of dicts.
#[pyfunction]
fn presets(py: Python<'_>) -> PyResult<Bound<'_, PyList>> {
    let items = harness::PRESETS
        .iter()
        .map(|p| {
            let d = PyDict::new(py);
            d.set_item("name", p.name)?;
            d.set_item("rtt_ms", p.rtt_ms)?;
            match p.loss {
                LossModel::GilbertElliott { p, r } => {
                    d.set_item("P", p)?;
                    d.set_item("R", r)?;
                }
                LossModel::Uniform { rate } => d.set_item("uniform_rate", rate)?,
            }
            d.set_item("loss_rate", p.loss.loss_rate().map_err(value_err)?)?;
            d.set_item("description", p.description)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    PyList::new(py, items)
}

fn prepared(suite: &str, additional_ke_rounds: u8, mtu: usize) -> PyResult<PreparedHandshake> {
    let cfg = EngineConfig {
        additional_ke_rounds,
        ..Default::default()
    };
    let plan = plan_handshake(&suite_named(suite)?, &cfg);
    PreparedHandshake::new(plan, &cfg, mtu, &OpaqueMaterial, 1).map_err(value_err)
}

/// (datagrams, IP/UDP-inclusive bytes) of a loss-free handshake.
#[pyfunction]
#[pyo3(signature = (suite, additional_ke_rounds = 2, mtu = 1500))]
fn zero_loss_cost(suite: &str, additional_ke_rounds: u8, mtu: usize) -> PyResult<(usize, u64)> {
    let h = prepared(suite, additional_ke_rounds, mtu)?;
    Ok((h.zero_loss_datagrams(), h.zero_loss_bytes()))
}

/// Simulates one handshake. Pass `loss_rate` for uniform loss or `p` and
/// `r` for burst loss.
#[pyfunction]
#[pyo3(signature = (suite, rtt_ms, seed, loss_rate = None, p = None, r = None))]
fn simulate<'py>(
    py: Python<'py>,
    suite: &str,
    rtt_ms: f64,
    seed: u64,
    loss_rate: Option<f64>,
    p: Option<f64>,
    r: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let script = Arc::new(prepared(suite, 2, 1500)?);
    let settings = SimSettings::new(
        LinkParams {
            rtt_ms,
            mtu: 1500,
            seed,
        },
        loss_model(loss_rate, p, r)?,
    );
    let out = harness::simulate_run(script, &settings, seed)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("established", out.established)?;
    d.set_item("setup_time_ms", out.setup_time.map(|t| t.as_ms()))?;
    d.set_item("total_bytes", out.total_bytes)?;
    d.set_item("datagrams", out.datagrams)?;
    d.set_item("retransmissions", out.retransmissions)?;
    d.set_item("restarts", out.restarts)?;
    Ok(d)
}

/// Two-state burst-loss channel; `step()` reports whether the next
/// datagram is dropped.
#[pyclass(name = "LossChannel")]
struct PyLossChannel {
    inner: netsim::GilbertElliottChannel,
}

#[pymethods]
impl PyLossChannel {
    #[new]
    #[pyo3(signature = (seed, loss_rate = None, p = None, r = None))]
    fn new(seed: u64, loss_rate: Option<f64>, p: Option<f64>, r: Option<f64>) -> PyResult<Self> {
        let inner = netsim::GilbertElliottChannel::new(loss_model(loss_rate, p, r)?, seed)
            .map_err(value_err)?;
        Ok(Self { inner })
    }

    fn step(&mut self) -> bool {
        self.inner.step()
    }

    /// Drops among the next `n` datagrams.
    fn count_drops(&mut self, n: u64) -> u64 {
        (0..n).filter(|_| self.inner.step()).count() as u64
    }
}

#[pyclass(name = "ResultSet", frozen)]
struct PyResultSet {
    inner: harness::ResultSet,
}

#[pymethods]
impl PyResultSet {
    #[getter]
    fn label(&self) -> &str {
        &self.inner.loss_point.label
    }

    #[getter]
    fn loss_rate(&self) -> f64 {
        self.inner.loss_point.loss_rate
    }

    #[getter]
    fn rtt_ms(&self) -> f64 {
        self.inner.rtt_ms
    }

    fn records<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let items = self
            .inner
            .records
            .iter()
            .map(|r| record_dict(py, r))
            .collect::<PyResult<Vec<_>>>()?;
        PyList::new(py, items)
    }

    /// Per-suite statistics, ECDF points and amplification ratios.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let text = harness::summary_json(&self.inner).map_err(value_err)?;
        json_to_py(py, &text)
    }

    /// p95 total-bytes ratio of `suite` over classical, if both ran.
    #[pyo3(signature = (suite = "qrc"))]
    fn amplification(&self, suite: &str) -> Option<f64> {
        self.inner
            .amplification
            .iter()
            .find(|a| a.suite == suite)
            .map(|a| a.total_bytes_p95_ratio)
    }

    fn to_csv(&self) -> PyResult<String> {
        harness::csv_string(&self.inner.records).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "ResultSet(label={:?}, records={}, loss_rate={})",
            self.inner.loss_point.label,
            self.inner.records.len(),
            self.inner.loss_point.loss_rate
        )
    }
}

/// Runs a scenario given as TOML text; one result set per loss point.
#[pyfunction]
#[pyo3(signature = (config_toml, suite = None, parallel = None))]
fn run_batch(
    py: Python<'_>,
    config_toml: &str,
    suite: Option<&str>,
    parallel: Option<usize>,
) -> PyResult<Vec<PyResultSet>> {
    let config = harness::parse_config(config_toml).map_err(value_err)?;
    let options = BatchOptions {
        suites: suite.map(selection).transpose()?,
        parallel,
    };
    let sets = py
        .detach(|| harness::run_batch(&config, &options))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(sets.into_iter().map(|inner| PyResultSet { inner }).collect())
}

#[pymodule]
#[pyo3(name = "ikesim")]
fn ikesim_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(steady_state_loss, m)?)?;
    m.add_function(wrap_pyfunction!(percentile, m)?)?;
    m.add_function(wrap_pyfunction!(ecdf, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(zero_loss_cost, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_batch, m)?)?;
    m.add_class::<PyLossChannel>()?;
    m.add_class::<PyResultSet>()?;
    Ok(())
}
