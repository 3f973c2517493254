//! Python bindings: configs, experiment runs, the exact scheduler and the
//! link model.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fl_e2ws::harness::metrics::{summarize, summary_table, write_metrics, HEADER};
use fl_e2ws::harness::{self, HarnessError};
use fl_e2ws::radio;
use fl_e2ws::scheduler::{self, ScheduleInstance};
use fl_e2ws::{ChannelParams, Device, ExpectationMode, StrategyKind};

create_exception!(fl_e2ws_py, SimulationError, PyException);

fn harness_err(e: HarnessError) -> PyErr {
    match e {
        HarnessError::Parse(_) | HarnessError::Invalid { .. } => PyValueError::new_err(e.to_string()),
        other => SimulationError::new_err(other.to_string()),
    }
}

fn parse_kind(name: &str) -> PyResult<StrategyKind> {
    name.parse().map_err(PyValueError::new_err)
}

/// Experiment configuration; `ExperimentConfig()` is the desk profile.
#[pyclass(name = "ExperimentConfig", module = "fl_e2ws_py", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: fl_e2ws::ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self {
            inner: fl_e2ws::ExperimentConfig::default(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        fl_e2ws::ExperimentConfig::from_toml(text)
            .map(|inner| Self { inner })
            .map_err(harness_err)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        harness::config::parse_config(&path)
            .map(|inner| Self { inner })
            .map_err(harness_err)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(harness_err)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(harness_err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }

    #[getter]
    fn rounds(&self) -> usize {
        self.inner.rounds
    }

    #[setter]
    fn set_rounds(&mut self, v: usize) {
        self.inner.rounds = v;
    }

    #[getter]
    fn repeats(&self) -> usize {
        self.inner.repeats
    }

    #[setter]
    fn set_repeats(&mut self, v: usize) {
        self.inner.repeats = v;
    }

    #[getter]
    fn strategies(&self) -> Vec<&'static str> {
        self.inner.strategies.iter().map(|k| k.name()).collect()
    }

    #[setter]
    fn set_strategies(&mut self, names: Vec<String>) -> PyResult<()> {
        self.inner.strategies = names.iter().map(|n| parse_kind(n)).collect::<PyResult<_>>()?;
        Ok(())
    }

    /// `(max_delay_s, max_energy_j, max_per)`.
    #[getter]
    fn policy(&self) -> (f64, f64, f64) {
        let p = self.inner.policy;
        (p.max_delay_s, p.max_energy_j, p.max_per)
    }

    #[setter]
    fn set_policy(&mut self, v: (f64, f64, f64)) {
        self.inner.policy = fl_e2ws::Policy {
            max_delay_s: v.0,
            max_energy_j: v.1,
            max_per: v.2,
        };
    }

    #[getter]
    fn force_success(&self) -> bool {
        self.inner.strategy.force_success
    }

    #[setter]
    fn set_force_success(&mut self, v: bool) {
        self.inner.strategy.force_success = v;
    }

    fn __repr__(&self) -> String {
        format!(
            "ExperimentConfig(seed={}, rounds={}, repeats={}, devices={}, n_f={})",
            self.inner.seed, self.inner.rounds, self.inner.repeats, self.inner.network.devices, self.inner.network.n_f
        )
    }
}

/// Per-round metrics of every (strategy, repeat) run.
#[pyclass(name = "ExperimentResult", module = "fl_e2ws_py", frozen)]
struct PyExperimentResult {
    inner: harness::ExperimentResult,
}

#[pymethods]
impl PyExperimentResult {
    fn strategies(&self) -> Vec<&'static str> {
        self.inner.by_strategy().keys().map(|k| k.name()).collect()
    }

    /// One dict per round, keyed by the CSV header.
    fn rounds<'py>(&self, py: Python<'py>, strategy: &str, repeat: usize) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let kind = parse_kind(strategy)?;
        let run = self
            .inner
            .run(kind, repeat)
            .ok_or_else(|| PyValueError::new_err(format!("no run for {strategy} repeat {repeat}")))?;
        let names: Vec<&str> = HEADER.split(',').collect();
        run.rounds
            .iter()
            .map(|m| {
                let d = PyDict::new(py);
                d.set_item(names[0], m.round)?;
                for (i, v) in m.columns().iter().enumerate() {
                    if i < 4 {
                        d.set_item(names[i + 1], *v as u64)?;
                    } else {
                        d.set_item(names[i + 1], *v)?;
                    }
                }
                Ok(d)
            })
            .collect()
    }

    /// Totals averaged over repeats, per strategy.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let out = PyDict::new(py);
        for (kind, s) in summarize(&self.inner) {
            let d = PyDict::new(py);
            d.set_item("total_energy_j", s.total_energy_j)?;
            d.set_item("wasted_energy_j", s.wasted_energy_j)?;
            d.set_item("successes", s.successes)?;
            d.set_item("final_accuracy", s.final_accuracy)?;
            out.set_item(kind.name(), d)?;
        }
        Ok(out)
    }

    fn summary_table(&self) -> String {
        summary_table(&self.inner)
    }

    /// Writes the per-repeat and aggregate CSVs; returns their paths.
    fn write_csv(&self, out_dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        write_metrics(&self.inner, &out_dir).map_err(harness_err)
    }
}

/// Runs the experiment without holding the GIL.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: PyConfig) -> PyResult<PyExperimentResult> {
    let inner = py
        .detach(|| harness::run_experiment(&config.inner))
        .map_err(harness_err)?;
    Ok(PyExperimentResult { inner })
}

fn read_instance(json: &str) -> PyResult<ScheduleInstance> {
    serde_json::from_str(json).map_err(|e| PyValueError::new_err(format!("instance: {e}")))
}

fn to_json(schedule: &scheduler::Schedule) -> PyResult<String> {
    serde_json::to_string(schedule).map_err(|e| SimulationError::new_err(e.to_string()))
}

/// Solves a JSON scheduling instance exactly; returns the schedule as JSON.
#[pyfunction]
fn solve_schedule(instance_json: &str) -> PyResult<String> {
    let inst = read_instance(instance_json)?;
    let s = scheduler::solve_schedule(&inst.candidates, &inst.config)
        .map_err(|e| SimulationError::new_err(e.to_string()))?;
    to_json(&s)
}

/// Exhaustive reference solver for small instances.
#[pyfunction]
fn brute_force_schedule(instance_json: &str) -> PyResult<String> {
    let inst = read_instance(instance_json)?;
    let s = scheduler::brute_force_schedule(&inst.candidates, &inst.config)
        .map_err(|e| SimulationError::new_err(e.to_string()))?;
    to_json(&s)
}

fn link(distance_m: f64, samples: Option<usize>, seed: u64) -> (Device, ChannelParams) {
    let device = Device {
        id: 0,
        distance_m,
        fading_seed: seed,
        data_size: 1,
        compute: Default::default(),
        cycles_load: 1.0,
    };
    let mut params = ChannelParams::default();
    match samples {
        Some(n) => params.fading_samples = n,
        None => params.expectation_mode = ExpectationMode::MeanFading,
    }
    (device, params)
}

/// Expected uplink rate in bit/s. `samples=None` evaluates at the fading mean.
#[pyfunction]
#[pyo3(signature = (distance_m, bandwidth_hz, power_w, interference_w, samples=None, seed=0))]
fn uplink_rate(
    distance_m: f64,
    bandwidth_hz: f64,
    power_w: f64,
    interference_w: f64,
    samples: Option<usize>,
    seed: u64,
) -> PyResult<f64> {
    let (device, params) = link(distance_m, samples, seed);
    params.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
    radio::uplink_rate(bandwidth_hz, power_w, &device, interference_w, &params)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
#[pyo3(signature = (distance_m, bandwidth_hz, power_w, interference_w, samples=None, seed=0))]
fn packet_error_rate(
    distance_m: f64,
    bandwidth_hz: f64,
    power_w: f64,
    interference_w: f64,
    samples: Option<usize>,
    seed: u64,
) -> PyResult<f64> {
    let (device, params) = link(distance_m, samples, seed);
    params.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
    radio::packet_error_rate(bandwidth_hz, power_w, &device, interference_w, &params)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn fl_e2ws_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SimulationError", m.py().get_type::<SimulationError>())?;
    m.add(
        "STRATEGIES",
        StrategyKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>(),
    )?;
    m.add("CSV_HEADER", HEADER)?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyExperimentResult>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(solve_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(uplink_rate, m)?)?;
    m.add_function(wrap_pyfunction!(packet_error_rate, m)?)?;
    Ok(())
}
