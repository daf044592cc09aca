//! Python bindings: scenario handling, full runs and the standalone
//! metric and sizing functions.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mbsfn_sim::engine::{replicate_seed, run_with_seed, RunRecord};
use mbsfn_sim::{channel, link, metrics, scheduler};
use mbsfn_sim::{CqiPolicy, ScenarioConfig, SimError, TransmissionMode};

fn py_err(e: SimError) -> PyErr {
    match e {
        SimError::Internal(_) | SimError::Io { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// A scenario description. Build from TOML text, or with no argument for
/// the reference scenario.
#[pyclass(name = "Scenario", module = "mbsfn_sim_py")]
#[derive(Clone)]
struct PyScenario {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (toml = None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(text) => ScenarioConfig::from_toml_str(text).map_err(py_err)?,
            None => ScenarioConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ScenarioConfig::load(path).map_err(py_err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    fn label(&self) -> String {
        self.inner.label()
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.run.mode.to_string()
    }

    #[setter]
    fn set_mode(&mut self, mode: &str) -> PyResult<()> {
        self.inner.run.mode = mode.parse::<TransmissionMode>().map_err(py_err)?;
        Ok(())
    }

    #[getter]
    fn cqi_policy(&self) -> String {
        self.inner.run.cqi_policy.to_string()
    }

    #[setter]
    fn set_cqi_policy(&mut self, policy: &str) -> PyResult<()> {
        self.inner.run.cqi_policy = policy.parse::<CqiPolicy>().map_err(py_err)?;
        Ok(())
    }

    #[getter]
    fn bandwidth_mhz(&self) -> f64 {
        self.inner.radio.bandwidth_mhz
    }

    #[setter]
    fn set_bandwidth_mhz(&mut self, mhz: f64) {
        self.inner.radio.bandwidth_mhz = mhz;
    }

    #[getter]
    fn n_tti(&self) -> u64 {
        self.inner.run.n_tti
    }

    #[setter]
    fn set_n_tti(&mut self, n: u64) {
        self.inner.run.n_tti = n;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.run.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.run.seed = seed;
    }

    fn __repr__(&self) -> String {
        format!("Scenario('{}', n_tti={})", self.inner.label(), self.inner.run.n_tti)
    }
}

/// Result of one simulation run.
#[pyclass(name = "RunRecord", module = "mbsfn_sim_py")]
struct PyRunRecord {
    inner: RunRecord,
}

#[pymethods]
impl PyRunRecord {
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.inner.config_hash.clone()
    }

    #[getter]
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = &self.inner.summary;
        let d = PyDict::new_bound(py);
        d.set_item("mode", &s.mode)?;
        d.set_item("bandwidth_mhz", s.bandwidth_mhz)?;
        d.set_item("cqi_policy", &s.cqi_policy)?;
        d.set_item("mean_latency_tti", s.mean_latency_tti)?;
        d.set_item("mean_throughput_mbps", s.mean_throughput_mbps)?;
        d.set_item("utilization_pct", s.utilization_pct)?;
        d.set_item("measured_utilization_pct", s.measured_utilization_pct)?;
        d.set_item("congested", s.congested)?;
        Ok(d)
    }

    /// Latency matrix as a list of packet rows, one column per source.
    #[getter]
    fn latency(&self) -> Vec<Vec<u64>> {
        let l = &self.inner.latency;
        (0..l.n_packets)
            .map(|s| (0..l.n_users).map(|i| l.get(s, i).latency_tti).collect())
            .collect()
    }

    #[getter]
    fn source_users(&self) -> Vec<usize> {
        self.inner.source_users.clone()
    }

    #[getter]
    fn ordinary_throughput_mbps(&self) -> Vec<f64> {
        self.inner.ordinary_throughput_mbps.clone()
    }

    #[getter]
    fn reserved_subframes(&self) -> u32 {
        self.inner.reserved_subframes
    }

    #[getter]
    fn required_subframes(&self) -> u32 {
        self.inner.required_subframes
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    /// Multicast RBs used in each TTI.
    #[getter]
    fn mbsfn_rbs(&self) -> Vec<u32> {
        self.inner.trace.iter().map(|t| t.mbsfn_rbs).collect()
    }

    fn cdf_combined(&self) -> PyResult<Vec<(f64, f64)>> {
        Ok(metrics::cdf_combined(&self.inner.latency).map_err(py_err)?.points())
    }

    fn cdf_mean(&self) -> PyResult<Vec<(f64, f64)>> {
        Ok(metrics::cdf_mean(&self.inner.latency).map_err(py_err)?.points())
    }

    fn __repr__(&self) -> String {
        format!("RunRecord({})", self.inner.summary.csv_row())
    }
}

/// Runs a scenario, optionally with a different seed. Releases the GIL.
#[pyfunction]
#[pyo3(signature = (scenario, seed = None))]
fn run(py: Python<'_>, scenario: &PyScenario, seed: Option<u64>) -> PyResult<PyRunRecord> {
    let cfg = scenario.inner.clone();
    let seed = seed.unwrap_or(cfg.run.seed);
    let inner = py.allow_threads(|| run_with_seed(&cfg, seed)).map_err(py_err)?;
    Ok(PyRunRecord { inner })
}

/// Runs `n` independent drops of a scenario.
#[pyfunction]
fn replicate(py: Python<'_>, scenario: &PyScenario, n: u64) -> PyResult<Vec<PyRunRecord>> {
    let cfg = scenario.inner.clone();
    let records = py
        .allow_threads(|| {
            (0..n)
                .map(|k| run_with_seed(&cfg, replicate_seed(cfg.run.seed, k)))
                .collect::<mbsfn_sim::Result<Vec<_>>>()
        })
        .map_err(py_err)?;
    Ok(records.into_iter().map(|inner| PyRunRecord { inner }).collect())
}

#[pyfunction]
fn predicted_throughput_ratio(util_a: f64, rb_a: f64, util_b: f64, rb_b: f64) -> PyResult<f64> {
    metrics::predicted_throughput_ratio(util_a, rb_a, util_b, rb_b).map_err(py_err)
}

/// Utilization in percent for `n_users` sources sending `packet_bits` per window.
#[pyfunction]
fn utilization(packet_bits: f64, n_users: usize, n_rb_window: f64, n_re: f64, cqi: u8) -> PyResult<f64> {
    let eff = link::cqi_efficiency(cqi).map_err(py_err)?;
    metrics::utilization(packet_bits, n_users, n_rb_window, n_re, eff).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (packet_bits, n_users, n_rb, n_re, cqi, period_tti = 100))]
fn required_subframes(packet_bits: f64, n_users: usize, n_rb: usize, n_re: u32, cqi: u8, period_tti: u64) -> PyResult<u32> {
    let eff = link::cqi_efficiency(cqi).map_err(py_err)?;
    scheduler::required_subframes(packet_bits, n_users, n_rb, n_re, eff, period_tti).map_err(py_err)
}

#[pyfunction]
fn cqi_efficiency(cqi: u8) -> PyResult<f64> {
    link::cqi_efficiency(cqi).map_err(py_err)
}

/// CQI for a list of per-RB linear SINRs.
#[pyfunction]
fn sinr_to_cqi(sinr_per_rb: Vec<f64>) -> u8 {
    link::sinr_to_cqi(&sinr_per_rb)
}

/// ECDF as `(value, probability)` steps.
#[pyfunction]
fn ecdf(samples: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    Ok(metrics::ecdf(&samples).map_err(py_err)?.points())
}

/// Latency of a packet generated and delivered at the given TTIs.
#[pyfunction]
fn close_packet(generation_tti: u64, delivery_tti: u64, losses: u32) -> PyResult<u64> {
    Ok(metrics::close_packet(0, 0, generation_tti, delivery_tti, losses)
        .map_err(py_err)?
        .latency_tti)
}

#[pyfunction]
fn doppler_frequency(speed_mps: f64, carrier_hz: f64) -> f64 {
    channel::doppler_frequency(speed_mps, carrier_hz)
}

#[pymodule]
fn mbsfn_sim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunRecord>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(replicate, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_throughput_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(utilization, m)?)?;
    m.add_function(wrap_pyfunction!(required_subframes, m)?)?;
    m.add_function(wrap_pyfunction!(cqi_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(sinr_to_cqi, m)?)?;
    m.add_function(wrap_pyfunction!(ecdf, m)?)?;
    m.add_function(wrap_pyfunction!(close_packet, m)?)?;
    m.add_function(wrap_pyfunction!(doppler_frequency, m)?)?;
    Ok(())
}
