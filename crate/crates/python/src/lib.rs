//! Python bindings: the search space, the synthetic-evaluator search loop,
//! the cost model and the image metrics. Structured results come back as
//! plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use vsrhpo_core::cost::{graph_cost as cost_of, hofvsr_graph, ArchitectureGraph, InputShape};
use vsrhpo_core::log::LogEvent;
use vsrhpo_core::metrics::{default_constants, psnr as psnr_of, ssim as ssim_of, Raster};
use vsrhpo_core::{
    run_search as run, BudgetSpec, ClockMode, Configuration, JsonlSink, LogSink, ObjectiveAgg, SamplerSpec,
    SearchOptions, SearchResult, SearchSpace, SyntheticEvaluator, TrialLog,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialized<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(v).map_err(value_err)?)
}

fn config_from(dict: &Bound<'_, PyDict>) -> PyResult<Configuration> {
    let mut c = Configuration::new();
    for (k, v) in dict.iter() {
        c.insert(k.extract::<String>()?, v.extract::<i64>()?);
    }
    Ok(c)
}

/// Finite ordinal search space.
#[pyclass(name = "SearchSpace", frozen, from_py_object, module = "vsrhpo")]
#[derive(Clone)]
struct PySpace(SearchSpace);

#[pymethods]
impl PySpace {
    /// The built-in 800-configuration space.
    #[staticmethod]
    fn hofvsr() -> Self {
        Self(SearchSpace::hofvsr())
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        SearchSpace::from_json_str(text).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        SearchSpace::from_file(path).map(Self).map_err(value_err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn size(&self) -> u64 {
        self.0.size()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.0.domains().iter().map(|d| d.name.clone()).collect()
    }

    #[getter]
    fn cardinalities(&self) -> Vec<usize> {
        self.0.cardinalities()
    }

    fn content_hash(&self) -> String {
        self.0.content_hash()
    }

    /// Raises ValueError when `config` is not a member.
    fn validate(&self, config: &Bound<'_, PyDict>) -> PyResult<()> {
        self.0.validate(&config_from(config)?).map_err(value_err)
    }

    fn encode(&self, config: &Bound<'_, PyDict>) -> PyResult<Vec<usize>> {
        self.0.encode(&config_from(config)?).map_err(value_err)
    }

    fn decode<'py>(&self, py: Python<'py>, encoded: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
        serialized(py, &self.0.decode(&encoded).map_err(value_err)?)
    }

    fn rank(&self, encoded: Vec<usize>) -> PyResult<u64> {
        let cards = self.0.cardinalities();
        if encoded.len() != cards.len() || encoded.iter().zip(&cards).any(|(e, c)| e >= c) {
            return Err(PyValueError::new_err(format!("{encoded:?} is not an encoding in {cards:?}")));
        }
        Ok(self.0.rank(&encoded))
    }

    fn unrank(&self, rank: u64) -> PyResult<Vec<usize>> {
        if rank >= self.0.size() {
            return Err(PyValueError::new_err(format!("rank {rank} >= size {}", self.0.size())));
        }
        Ok(self.0.unrank(rank))
    }

    /// Every configuration in rank order.
    fn enumerate<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyAny>>> {
        self.0.enumerate().map(|c| serialized(py, &c)).collect()
    }

    fn __len__(&self) -> usize {
        self.0.size() as usize
    }

    fn __repr__(&self) -> String {
        format!("SearchSpace({} domains, {} configurations)", self.0.dims(), self.0.size())
    }
}

fn trials_to_py<'py>(py: Python<'py>, r: &SearchResult) -> PyResult<Bound<'py, PyDict>> {
    let trials = PyList::empty(py);
    for t in &r.trials {
        let d = PyDict::new(py);
        d.set_item("trial_id", t.trial_id)?;
        d.set_item("config", serialized(py, &t.config)?)?;
        d.set_item("status", t.status.to_string())?;
        d.set_item("objective", t.objective)?;
        d.set_item("losses", t.epoch_reports.iter().map(|e| e.eval_loss).collect::<Vec<_>>())?;
        d.set_item("duration_s", t.duration_s())?;
        trials.append(d)?;
    }
    let out = PyDict::new(py);
    out.set_item("best_trial", r.best_trial)?;
    out.set_item("best", serialized(py, &r.best)?)?;
    out.set_item("best_objective", r.best_objective)?;
    out.set_item("elapsed_s", r.elapsed_s)?;
    out.set_item("trials", trials)?;
    Ok(out)
}

/// Runs a search against the built-in synthetic evaluator.
///
/// Returns a dict with `best_trial`, `best`, `best_objective`, `elapsed_s`
/// and `trials`. With `log_path` the JSONL trial log is written as well.
#[pyfunction]
#[pyo3(signature = (
    sampler = "tpe", *, seed = 0, max_trials = 40, epochs = 20, wall_clock_s = 115_200,
    space = None, profile_seed = 0, epoch_seconds = 240.0, duration_jitter = 0.0,
    clock = "simulated", objective = "min", sampler_params = None, log_path = None
))]
#[allow(clippy::too_many_arguments)]
fn run_search<'py>(
    py: Python<'py>,
    sampler: &str,
    seed: u64,
    max_trials: u32,
    epochs: u32,
    wall_clock_s: u64,
    space: Option<PySpace>,
    profile_seed: u64,
    epoch_seconds: f64,
    duration_jitter: f64,
    clock: &str,
    objective: &str,
    sampler_params: Option<Bound<'py, PyDict>>,
    log_path: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let space = space.map_or_else(SearchSpace::hofvsr, |s| s.0);
    let mut spec: SamplerSpec = sampler.parse().map_err(value_err)?;
    if let Some(params) = sampler_params {
        for (k, v) in params.iter() {
            spec.set_param(&k.extract::<String>()?, &v.str()?.to_string()).map_err(value_err)?;
        }
    }
    let mut opts = SearchOptions::new(
        spec,
        BudgetSpec {
            max_trials,
            epochs_per_trial: epochs,
            wall_clock_limit_s: wall_clock_s,
            clock_mode: clock.parse::<ClockMode>().map_err(value_err)?,
        },
        seed,
    );
    opts.objective = objective.parse::<ObjectiveAgg>().map_err(value_err)?;
    let mut ev = SyntheticEvaluator::new(&space, profile_seed)
        .with_epoch_seconds(epoch_seconds)
        .with_duration_jitter(duration_jitter);
    let mut sink: Box<dyn LogSink + Send> = match &log_path {
        Some(p) => Box::new(JsonlSink::create(p).map_err(|e| PyOSError::new_err(format!("{}: {e}", p.display())))?),
        None => Box::new(Vec::<LogEvent>::new()),
    };
    let result = py
        .detach(|| run(&space, &opts, &mut ev, sink.as_mut()))
        .map_err(value_err)?;
    trials_to_py(py, &result)
}

/// Parses a JSONL trial log into the same dict shape as `run_search`.
#[pyfunction]
fn read_log<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let log = TrialLog::from_path(&path).map_err(value_err)?;
    let elapsed = log.result.as_ref().map_or(f64::NAN, |r| r.elapsed_s);
    let out = trials_to_py(py, &SearchResult::from_trials(log.trials.clone(), elapsed))?;
    out.set_item("sampler", &log.header.sampler)?;
    out.set_item("seed", log.header.seed)?;
    out.set_item("complete", log.is_complete())?;
    Ok(out)
}

/// Cost report of one member of the searched family.
#[pyfunction]
#[pyo3(signature = (res_channels = 64, n_res = 5, up_channels = 64, scale = 4, input = "36x36x1x3"))]
fn hofvsr_cost<'py>(
    py: Python<'py>,
    res_channels: u32,
    n_res: u32,
    up_channels: u32,
    scale: u32,
    input: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let input: InputShape = input.parse().map_err(PyValueError::new_err)?;
    let g = hofvsr_graph(res_channels, n_res, up_channels, scale, input).map_err(value_err)?;
    serialized(py, &cost_of(&g))
}

/// Cost report of an architecture graph given as JSON text.
#[pyfunction]
fn graph_cost<'py>(py: Python<'py>, graph_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let g = ArchitectureGraph::from_json_str(graph_json).map_err(value_err)?;
    serialized(py, &cost_of(&g))
}

fn raster(rows: Vec<Vec<f64>>, max_val: f64) -> PyResult<Raster> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("ragged rows"));
    }
    Raster::new(h, w, rows.into_iter().flatten().collect(), max_val).map_err(value_err)
}

/// PSNR in dB between two 2-D single-channel images; `inf` when identical.
#[pyfunction]
#[pyo3(signature = (reference, test, max_val = 255.0))]
fn psnr(reference: Vec<Vec<f64>>, test: Vec<Vec<f64>>, max_val: f64) -> PyResult<f64> {
    psnr_of(&raster(reference, max_val)?, &raster(test, max_val)?).map_err(value_err)
}

/// Mean SSIM over non-overlapping `window` x `window` tiles.
#[pyfunction]
#[pyo3(signature = (reference, test, max_val = 255.0, window = 8))]
fn ssim(reference: Vec<Vec<f64>>, test: Vec<Vec<f64>>, max_val: f64, window: usize) -> PyResult<f64> {
    let (c1, c2) = default_constants(max_val);
    ssim_of(&raster(reference, max_val)?, &raster(test, max_val)?, c1, c2, window).map_err(value_err)
}

#[pymodule]
fn vsrhpo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpace>()?;
    m.add_function(wrap_pyfunction!(run_search, m)?)?;
    m.add_function(wrap_pyfunction!(read_log, m)?)?;
    m.add_function(wrap_pyfunction!(hofvsr_cost, m)?)?;
    m.add_function(wrap_pyfunction!(graph_cost, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    Ok(())
}
