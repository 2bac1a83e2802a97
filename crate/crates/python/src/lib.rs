//! Python bindings: metrics, transport, contrastive losses, run configs, the
//! CLI commands and trained encoders.

use std::collections::BTreeMap;
use std::path::PathBuf;

use fairsinkhorn::contrastive::{fairclip_loss as core_fairclip_loss, EmbeddingBatch, FairClipConfig};
use fairsinkhorn::encoders::load_checkpoint;
use fairsinkhorn::harness::{self, Overrides, RunOptions};
use fairsinkhorn::metrics::{self, Predictions};
use fairsinkhorn::ot::{self, CostKind, EmpiricalDistribution, EpsilonScale, SinkhornConfig};
use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyString};
use serde_json::Value;

fn py_err(e: fairsinkhorn::Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for fairsinkhorn::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (_, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let items = items.iter().map(|x| json_to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(map) => {
            let d = PyDict::new(py);
            for (k, x) in map {
                d.set_item(k, json_to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &value)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn distribution(support: Vec<f64>, weights: Option<Vec<f64>>) -> PyResult<EmpiricalDistribution> {
    match weights {
        Some(w) => EmpiricalDistribution::new(support, w),
        None => EmpiricalDistribution::uniform(support),
    }
    .py()
}

fn cost_kind(name: &str) -> PyResult<CostKind> {
    match name {
        "squared" => Ok(CostKind::Squared),
        "absolute" => Ok(CostKind::Absolute),
        other => Err(PyValueError::new_err(format!("unknown cost `{other}`"))),
    }
}

fn sinkhorn_config(
    epsilon: f64,
    epsilon_scale: &str,
    cost: &str,
    debias: bool,
    max_iters: usize,
    tolerance: f64,
) -> PyResult<SinkhornConfig> {
    let epsilon_scale = match epsilon_scale {
        "mean_cost" => EpsilonScale::MeanCost,
        "absolute" => EpsilonScale::Absolute,
        other => return Err(PyValueError::new_err(format!("unknown epsilon_scale `{other}`"))),
    };
    Ok(SinkhornConfig {
        epsilon,
        epsilon_scale,
        max_iters,
        tolerance,
        cost_kind: cost_kind(cost)?,
        debias,
    })
}

/// AUC with ties counted as one half.
#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    metrics::auc(&scores, &labels).py()
}

/// Overall AUC scaled down by the summed group deviations.
#[pyfunction]
fn es_auc(overall_auc: f64, group_aucs: Vec<f64>) -> f64 {
    metrics::es_auc(overall_auc, group_aucs)
}

fn predictions(
    scores: Vec<f64>,
    labels: Vec<u8>,
    groups: Vec<usize>,
    num_groups: Option<usize>,
    threshold: f64,
) -> PyResult<Predictions> {
    let num_groups = num_groups.unwrap_or_else(|| groups.iter().max().map_or(0, |g| g + 1));
    Predictions::new(scores, labels, groups, num_groups, threshold).py()
}

/// Largest gap in positive-prediction rate between groups.
#[pyfunction]
#[pyo3(signature = (scores, labels, groups, num_groups=None, threshold=0.5))]
fn dpd(scores: Vec<f64>, labels: Vec<u8>, groups: Vec<usize>, num_groups: Option<usize>, threshold: f64) -> PyResult<f64> {
    metrics::dpd(&predictions(scores, labels, groups, num_groups, threshold)?).py()
}

/// Largest gap in true- or false-positive rate between groups.
#[pyfunction]
#[pyo3(signature = (scores, labels, groups, num_groups=None, threshold=0.5))]
fn deodds(scores: Vec<f64>, labels: Vec<u8>, groups: Vec<usize>, num_groups: Option<usize>, threshold: f64) -> PyResult<f64> {
    metrics::deodds(&predictions(scores, labels, groups, num_groups, threshold)?).py()
}

/// Full report as a dict.
#[pyfunction]
#[pyo3(signature = (scores, labels, groups, attribute, level_names=None, threshold=0.5))]
fn evaluate<'py>(
    py: Python<'py>,
    scores: Vec<f64>,
    labels: Vec<u8>,
    groups: Vec<usize>,
    attribute: &str,
    level_names: Option<Vec<String>>,
    threshold: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let num_groups = level_names.as_ref().map(Vec::len);
    let preds = predictions(scores, labels, groups, num_groups, threshold)?;
    let mut report = metrics::evaluate(&preds, attribute).py()?;
    if let Some(names) = level_names {
        report = report.with_level_names(&names);
    }
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (a, b, a_weights=None, b_weights=None, cost="squared"))]
fn exact_wasserstein_1d(
    a: Vec<f64>,
    b: Vec<f64>,
    a_weights: Option<Vec<f64>>,
    b_weights: Option<Vec<f64>>,
    cost: &str,
) -> PyResult<f64> {
    Ok(ot::exact_wasserstein_1d(&distribution(a, a_weights)?, &distribution(b, b_weights)?, cost_kind(cost)?))
}

/// Entropic transport cost between two weighted point sets on the line.
#[pyfunction]
#[pyo3(signature = (
    a, b, a_weights=None, b_weights=None, epsilon=0.1, epsilon_scale="mean_cost",
    cost="squared", debias=false, max_iters=1000, tolerance=1e-6
))]
#[allow(clippy::too_many_arguments)]
fn sinkhorn_distance(
    a: Vec<f64>,
    b: Vec<f64>,
    a_weights: Option<Vec<f64>>,
    b_weights: Option<Vec<f64>>,
    epsilon: f64,
    epsilon_scale: &str,
    cost: &str,
    debias: bool,
    max_iters: usize,
    tolerance: f64,
) -> PyResult<f64> {
    let cfg = sinkhorn_config(epsilon, epsilon_scale, cost, debias, max_iters, tolerance)?;
    ot::sinkhorn_distance(&distribution(a, a_weights)?, &distribution(b, b_weights)?, &cfg).py()
}

/// Gradients of `sinkhorn_distance` with respect to both supports.
#[pyfunction]
#[pyo3(signature = (
    a, b, a_weights=None, b_weights=None, epsilon=0.1, epsilon_scale="mean_cost",
    cost="squared", debias=false, max_iters=1000, tolerance=1e-6
))]
#[allow(clippy::too_many_arguments)]
fn sinkhorn_grad_support(
    a: Vec<f64>,
    b: Vec<f64>,
    a_weights: Option<Vec<f64>>,
    b_weights: Option<Vec<f64>>,
    epsilon: f64,
    epsilon_scale: &str,
    cost: &str,
    debias: bool,
    max_iters: usize,
    tolerance: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let cfg = sinkhorn_config(epsilon, epsilon_scale, cost, debias, max_iters, tolerance)?;
    ot::sinkhorn_grad_support(&distribution(a, a_weights)?, &distribution(b, b_weights)?, &cfg).py()
}

/// Contrastive loss plus `lambda_fair` times one transport term per group.
///
/// `groups` maps a level index to an `(image, text)` pair of row lists.
/// Returns a dict with the loss, its parts and the embedding gradients.
#[pyfunction]
#[pyo3(signature = (
    image, text, groups=None, lambda_fair=0.0, temperature=0.07, epsilon=0.1,
    epsilon_scale="mean_cost", cost="squared", debias=false
))]
#[allow(clippy::too_many_arguments)]
fn fairclip_loss<'py>(
    py: Python<'py>,
    image: Vec<Vec<f64>>,
    text: Vec<Vec<f64>>,
    groups: Option<BTreeMap<usize, (Vec<Vec<f64>>, Vec<Vec<f64>>)>>,
    lambda_fair: f64,
    temperature: f64,
    epsilon: f64,
    epsilon_scale: &str,
    cost: &str,
    debias: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let batch = EmbeddingBatch::new(matrix(image)?, matrix(text)?).py()?;
    let mut group_batches = BTreeMap::new();
    for (level, (gi, gt)) in groups.unwrap_or_default() {
        group_batches.insert(level, EmbeddingBatch::new(matrix(gi)?, matrix(gt)?).py()?);
    }
    let cfg = FairClipConfig {
        lambda_fair,
        sinkhorn: sinkhorn_config(epsilon, epsilon_scale, cost, debias, 1000, 1e-6)?,
        ..FairClipConfig::default()
    };
    cfg.validate().py()?;
    let out = core_fairclip_loss(&batch, &group_batches, &cfg, temperature).py()?;
    let d = PyDict::new(py);
    d.set_item("loss", out.loss)?;
    d.set_item("clip_loss", out.clip_loss)?;
    d.set_item("sinkhorn_terms", out.sinkhorn_terms.clone())?;
    d.set_item("image_grad", rows(&out.batch_grads.image))?;
    d.set_item("text_grad", rows(&out.batch_grads.text))?;
    let group_grads = PyDict::new(py);
    for (level, g) in &out.group_grads {
        group_grads.set_item(level, (rows(&g.image), rows(&g.text)))?;
    }
    d.set_item("group_grads", group_grads)?;
    Ok(d)
}

/// A validated run configuration.
#[pyclass(frozen)]
struct RunConfig {
    inner: harness::RunConfig,
}

#[pymethods]
impl RunConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: harness::RunConfig::from_toml_str(text).py()?,
        })
    }

    /// Reads a file; relative paths inside resolve against its directory.
    #[staticmethod]
    #[pyo3(signature = (path, seed=None, out=None))]
    fn load(path: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> PyResult<Self> {
        let overrides = Overrides { seed, out_dir: out };
        Ok(Self {
            inner: harness::RunConfig::load(path, &overrides).py()?,
        })
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn out_dir(&self) -> PathBuf {
        self.inner.out_dir().to_path_buf()
    }

    fn __repr__(&self) -> String {
        format!("RunConfig(hash={})", &self.inner.hash()[..12])
    }
}

/// Writes the generated splits; returns the data directory.
#[pyfunction]
#[pyo3(signature = (config, timestamps=false))]
fn generate(config: &RunConfig, timestamps: bool) -> PyResult<PathBuf> {
    harness::cmd_generate(&config.inner, RunOptions { timestamps }).py()
}

/// Trains and writes logs and checkpoints; returns the per-step records.
#[pyfunction]
#[pyo3(signature = (config, timestamps=false))]
fn train<'py>(py: Python<'py>, config: &RunConfig, timestamps: bool) -> PyResult<Bound<'py, PyList>> {
    let out = harness::cmd_train(&config.inner, RunOptions { timestamps }).py()?;
    let steps = PyList::empty(py);
    for s in &out.steps {
        let d = PyDict::new(py);
        d.set_item("step", s.step)?;
        d.set_item("epoch", s.epoch)?;
        d.set_item("clip_loss", s.clip_loss)?;
        d.set_item("sinkhorn_terms", s.sinkhorn_terms.clone())?;
        d.set_item("total", s.total)?;
        steps.append(d)?;
    }
    Ok(steps)
}

/// Linear-probe reports, one dict per attribute.
#[pyfunction]
fn probe<'py>(py: Python<'py>, config: &RunConfig) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &harness::cmd_probe(&config.inner).py()?)
}

/// Zero-shot reports, one dict per attribute.
#[pyfunction]
fn zeroshot<'py>(py: Python<'py>, config: &RunConfig) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &harness::cmd_zeroshot(&config.inner).py()?)
}

/// Comparison rows as `(attribute, metric, baseline, candidate, delta, es_auc_improved)`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn compare(config: &RunConfig) -> PyResult<Vec<(String, String, Option<f64>, Option<f64>, Option<f64>, bool)>> {
    Ok(harness::cmd_compare(&config.inner)
        .py()?
        .into_iter()
        .map(|r| {
            let delta = r.delta();
            (r.attribute, r.metric, r.baseline, r.candidate, delta, r.es_auc_improved)
        })
        .collect())
}

/// The two encoders of a checkpoint.
#[pyclass(frozen)]
struct DualEncoder {
    inner: fairsinkhorn::encoders::DualEncoder,
}

#[pymethods]
impl DualEncoder {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_checkpoint(path).py()?.model,
        })
    }

    /// Raw (unnormalized) image embeddings, one row per input row.
    fn encode_image(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.image.forward(&matrix(features)?).py()?))
    }

    fn encode_text(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.text.forward(&matrix(features)?).py()?))
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.image.num_params() + self.inner.text.num_params()
    }
}

#[pymodule]
pub fn pyfairsinkhorn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FORMAT_VERSION", fairsinkhorn::FORMAT_VERSION)?;
    m.add_class::<RunConfig>()?;
    m.add_class::<DualEncoder>()?;
    for f in [
        wrap_pyfunction!(auc, m)?,
        wrap_pyfunction!(es_auc, m)?,
        wrap_pyfunction!(dpd, m)?,
        wrap_pyfunction!(deodds, m)?,
        wrap_pyfunction!(evaluate, m)?,
        wrap_pyfunction!(exact_wasserstein_1d, m)?,
        wrap_pyfunction!(sinkhorn_distance, m)?,
        wrap_pyfunction!(sinkhorn_grad_support, m)?,
        wrap_pyfunction!(fairclip_loss, m)?,
        wrap_pyfunction!(generate, m)?,
        wrap_pyfunction!(train, m)?,
        wrap_pyfunction!(probe, m)?,
        wrap_pyfunction!(zeroshot, m)?,
        wrap_pyfunction!(compare, m)?,
    ] {
        m.add_function(f)?;
    }
    Ok(())
}
