//! Python module `selfgrasp`: configs, the loss primitives, scene rendering
//! and a training driver.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;

use selfgrasp::evaluator::ContrastiveForm;
use selfgrasp::orchestrator::{RunConfig, Trainer as CoreTrainer};
use selfgrasp::simenv::{render_top as core_render_top, reset_scene, ObjectKind, OptimumDesign, SimConfig};
use selfgrasp::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Shape { .. } | Error::Placement(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Parse a snake_case enum name the way config files spell it.
fn parse_name<T: DeserializeOwned>(what: &str, name: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} {name:?}")))
}

/// Default run config as a JSON string.
#[pyfunction]
fn default_config() -> PyResult<String> {
    serde_json::to_string_pretty(&RunConfig::default()).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Negative-feedback weights for negatives ranked by descending confidence.
#[pyfunction]
fn alpha_coefficient(ranked_conf: Vec<f64>, k: usize) -> Vec<f64> {
    selfgrasp::detector::alpha_coefficient(&ranked_conf, k)
}

/// Contrastive loss of one embedding pair; `y = 0` marks a similar pair.
#[pyfunction]
#[pyo3(signature = (e1, e2, y, margin = 1.0, form = "literal"))]
fn contrastive_loss(e1: Vec<f64>, e2: Vec<f64>, y: u8, margin: f64, form: &str) -> PyResult<f64> {
    if e1.len() != e2.len() {
        return Err(PyValueError::new_err("embeddings differ in length"));
    }
    if y > 1 {
        return Err(PyValueError::new_err("y must be 0 or 1"));
    }
    let form: ContrastiveForm = parse_name("contrastive form", form)?;
    Ok(selfgrasp::evaluator::contrastive_loss(&e1, &e2, y, margin, form))
}

/// Render the top camera view of a fresh scene. Returns the flat pixel
/// values and the `(channels, height, width)` shape.
#[pyfunction]
#[pyo3(signature = (n_objects, seed, kind = "cylinder", design = "center"))]
fn render_top(n_objects: usize, seed: u64, kind: &str, design: &str) -> PyResult<(Vec<f64>, (usize, usize, usize))> {
    let kind: ObjectKind = parse_name("object kind", kind)?;
    let design: OptimumDesign = parse_name("design", design)?;
    let sim = SimConfig::default();
    let scene = reset_scene(n_objects, kind, design, seed, &sim).map_err(to_py)?;
    let img = core_render_top(&scene, &sim);
    let s = img.shape();
    Ok((img.data().to_vec(), (s[0], s[1], s[2])))
}

/// One training run driven from Python.
#[pyclass]
struct Trainer {
    inner: CoreTrainer,
}

#[pymethods]
impl Trainer {
    /// Build from a JSON config (defaults for missing keys, unknown keys
    /// rejected).
    #[new]
    #[pyo3(signature = (config_json = None))]
    fn new(config_json: Option<&str>) -> PyResult<Self> {
        let cfg: RunConfig = match config_json {
            Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => RunConfig::default(),
        };
        Ok(Self {
            inner: CoreTrainer::new(cfg).map_err(to_py)?,
        })
    }

    /// Run every remaining episode and return the JSON-lines run report.
    fn run(&mut self, py: Python<'_>) -> PyResult<String> {
        let inner = &mut self.inner;
        let report = py.detach(|| {
            let mut buf = Vec::new();
            inner.run(&mut buf, None).map(|_| buf)
        });
        String::from_utf8(report.map_err(to_py)?).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// Success rates on the fixed evaluation scenes, one dict per object
    /// count.
    fn evaluate<'py>(&mut self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let table = self.inner.evaluate().map_err(to_py)?;
        table
            .rows
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("objects", r.objects)?;
                d.set_item("trials", r.trials)?;
                d.set_item("condition1_rate", r.strict_rate())?;
                d.set_item("condition2_rate", r.any_rate())?;
                Ok(d)
            })
            .collect()
    }

    /// Run summary as a JSON string.
    fn summary(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.summary()).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn save_checkpoint(&self, dir: &str) -> PyResult<()> {
        self.inner.save_checkpoint(std::path::Path::new(dir)).map_err(to_py)
    }

    #[getter]
    fn episodes_done(&self) -> usize {
        self.inner.episodes_done()
    }
}

#[pymodule(name = "selfgrasp")]
fn selfgrasp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(contrastive_loss, m)?)?;
    m.add_function(wrap_pyfunction!(render_top, m)?)?;
    m.add_class::<Trainer>()?;
    Ok(())
}
