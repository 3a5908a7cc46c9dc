//! Python bindings: models, logs, replay, repair and the simulation helpers.

use std::collections::BTreeSet;

use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use ::pqr_repair as core;
use core::event_log::{parse_log_str, write_log_string};
use core::sim_eval::{self, Scenario};
use core::{MultiEntityLog, PqrSystem, RepairError, RepairMode};

create_exception!(pqr_repair, InfeasibleError, PyValueError, "Observed timestamps contradict the model minima.");

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Hands any serializable value to Python as plain dicts and lists.
fn to_python<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn read(path: &str) -> PyResult<String> {
    std::fs::read_to_string(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))
}

/// A validated PQR system.
#[pyclass(name = "Model", module = "pqr_repair", frozen)]
struct Model {
    inner: PqrSystem,
}

#[pymethods]
impl Model {
    #[new]
    fn new(json: &str) -> PyResult<Self> {
        core::pqr_model::parse_model(json).map(|inner| Model { inner }).map_err(value_error)
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Self::new(&read(path)?)
    }

    fn to_json(&self) -> String {
        core::pqr_model::serialize_model(&self.inner)
    }

    #[getter]
    fn transitions(&self) -> usize {
        self.inner.transition_count()
    }

    #[getter]
    fn resources(&self) -> Vec<String> {
        self.inner.resources.iter().map(|r| r.rid.clone()).collect()
    }

    #[getter]
    fn queues(&self) -> Vec<String> {
        self.inner.queues.iter().map(|q| q.qid.clone()).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(transitions={}, resources={}, queues={})",
            self.inner.transition_count(),
            self.inner.resources.len(),
            self.inner.queues.len()
        )
    }
}

/// An event log with case, resource and queue identifiers.
#[pyclass(name = "Log", module = "pqr_repair", frozen)]
struct Log {
    inner: MultiEntityLog,
}

#[pymethods]
impl Log {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        parse_log_str(text).map(|inner| Log { inner }).map_err(value_error)
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Self::from_csv(&read(path)?)
    }

    fn to_csv(&self) -> String {
        write_log_string(&self.inner)
    }

    /// Events as dicts; times are epoch milliseconds.
    fn events<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &self.inner.events())
    }

    fn cases(&self) -> Vec<String> {
        self.inner.ids(core::EntityType::Pid)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Log(events={}, cases={})", self.inner.len(), self.cases().len())
    }
}

/// Restored run with timestamp bounds for every event.
#[pyclass(name = "Repair", module = "pqr_repair", frozen)]
struct Repair {
    inner: core::Repair,
}

#[pymethods]
impl Repair {
    /// The repaired log; `mode` is `interval`, `tmin` or `tmax`.
    #[pyo3(signature = (mode = "interval"))]
    fn to_log(&self, mode: &str) -> PyResult<Log> {
        let mode: RepairMode = mode.parse().map_err(PyValueError::new_err)?;
        self.inner.to_log(mode).map(|inner| Log { inner }).map_err(value_error)
    }

    /// `{event_id: (tmin, tmax)}` in epoch milliseconds.
    #[getter]
    fn bounds(&self) -> std::collections::BTreeMap<String, (i64, i64)> {
        self.inner.solution.bounds.clone()
    }

    /// Sum of interval widths.
    #[getter]
    fn objective(&self) -> i128 {
        self.inner.solution.objective
    }

    /// The constraint system in lp_solve format.
    fn to_lp(&self) -> String {
        self.inner.constraints.to_lp_format()
    }
}

/// Restores the unobserved events of `log` and bounds their timestamps.
#[pyfunction]
fn repair(model: &Model, log: &Log) -> PyResult<Repair> {
    match core::repair(&model.inner, &log.inner) {
        Ok(inner) => Ok(Repair { inner }),
        Err(RepairError::Infeasible(sol)) => {
            let events: Vec<String> = sol.culprit_events().into_iter().map(String::from).collect();
            Err(InfeasibleError::new_err(format!("infeasible; culprit events {events:?}")))
        }
        Err(e) => Err(value_error(e)),
    }
}

/// Replays a complete log; returns `(accepted, diagnostics)`.
#[pyfunction]
fn replay<'py>(py: Python<'py>, model: &Model, log: &Log) -> PyResult<(bool, Bound<'py, PyAny>)> {
    let r = core::replay::replay_log(&model.inner, &log.inner).map_err(value_error)?;
    Ok((r.accepted, to_python(py, &r.diagnostics())?))
}

/// Generates a complete log from a scenario given as JSON.
#[pyfunction]
#[pyo3(signature = (model, scenario, seed = 0))]
fn simulate(model: &Model, scenario: &str, seed: u64) -> PyResult<Log> {
    let sc = Scenario::from_json(scenario).map_err(value_error)?;
    sim_eval::simulate(&model.inner, &sc, seed).map(|inner| Log { inner }).map_err(value_error)
}

/// Keeps events of the sensor labels, plus each case's first and last event.
#[pyfunction]
#[pyo3(signature = (log, sensors, keep_boundaries = true))]
fn partialize(log: &Log, sensors: Vec<String>, keep_boundaries: bool) -> PyResult<Log> {
    let sensors: BTreeSet<String> = sensors.into_iter().collect();
    sim_eval::partialize(&log.inner, &sensors, keep_boundaries)
        .map(|inner| Log { inner })
        .map_err(value_error)
}

/// Error metrics of a repaired log against the true complete log.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, repaired: &Log, truth: &Log) -> PyResult<Bound<'py, PyAny>> {
    let m = sim_eval::evaluate(&repaired.inner, &truth.inner).map_err(value_error)?;
    to_python(py, &m)
}

/// Items per minute on the segment `source -> target`, per window.
#[pyfunction]
#[pyo3(signature = (log, source, target, window_ms = 60_000))]
fn load_series<'py>(py: Python<'py>, log: &Log, source: &str, target: &str, window_ms: i64) -> PyResult<Bound<'py, PyAny>> {
    let s = sim_eval::load_series(&log.inner, source, target, window_ms).map_err(value_error)?;
    to_python(py, &s)
}

#[pymodule(name = "pqr_repair")]
fn pqr_repair_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Log>()?;
    m.add_class::<Repair>()?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add_function(wrap_pyfunction!(repair, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(partialize, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(load_series, m)?)?;
    Ok(())
}
