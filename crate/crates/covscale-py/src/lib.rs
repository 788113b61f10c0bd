//! Python bindings over the covscale library. Everything crosses the
//! boundary as plain lists, dicts, and strings; samples are row-major (one
//! row per sample), matching the CSV layout, while the core library stores
//! them column-major.

use std::collections::HashMap;
use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyString, PyTuple};

use covscale::{BandPassFilter, ExperimentConfig, KernelSpec, ModelKind, SaliencyTarget, SynthSpec};

fn to_py_err(e: covscale::Error) -> PyErr {
    match e {
        covscale::Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// str() for most values, but lists join with commas (j_list, lr_list,
/// priors) and booleans lowercase, so Python literals map onto the same
/// strings the CLI accepts via --set.
fn config_value(value: &Bound<'_, PyAny>) -> PyResult<String> {
    if value.cast::<PyString>().is_ok() {
        return value.extract();
    }
    if let Ok(b) = value.extract::<bool>() {
        return Ok(if b { "true" } else { "false" }.to_string());
    }
    if let Ok(list) = value.cast::<PyList>() {
        let parts: PyResult<Vec<String>> = list.iter().map(|v| config_value(&v)).collect();
        return Ok(parts?.join(","));
    }
    if let Ok(tuple) = value.cast::<PyTuple>() {
        let parts: PyResult<Vec<String>> = tuple.iter().map(|v| config_value(&v)).collect();
        return Ok(parts?.join(","));
    }
    Ok(value.str()?.to_string())
}

fn build_config(config: Option<HashMap<String, Bound<'_, PyAny>>>) -> PyResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(map) = config {
        let mut pairs: Vec<(String, String)> = map
            .iter()
            .map(|(k, v)| Ok((k.clone(), config_value(v)?)))
            .collect::<PyResult<_>>()?;
        pairs.sort();
        for (key, value) in &pairs {
            cfg.apply(key, value).map_err(to_py_err)?;
        }
    }
    cfg.resolve().map_err(to_py_err)?;
    Ok(cfg)
}

fn parse_target(target: &str) -> PyResult<SaliencyTarget> {
    match target {
        "probability" => Ok(SaliencyTarget::Probability),
        "logit" => Ok(SaliencyTarget::Logit),
        other => Err(PyValueError::new_err(format!(
            "saliency target must be 'probability' or 'logit', got '{other}'"
        ))),
    }
}

/// A labelled tabular dataset; rows are samples.
#[pyclass(name = "Dataset", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: covscale::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> PyResult<Self> {
        let n = features.len();
        let p = feature_names.len();
        for (i, row) in features.iter().enumerate() {
            if row.len() != p {
                return Err(PyValueError::new_err(format!(
                    "sample {i} has {} features, expected {p}",
                    row.len()
                )));
            }
        }
        let matrix = Array2::from_shape_fn((p, n), |(k, i)| features[i][k]);
        covscale::Dataset::new(matrix, labels, feature_names, class_names)
            .map(|inner| PyDataset { inner })
            .map_err(to_py_err)
    }

    /// Draw a synthetic classification dataset; arguments mirror the
    /// synth_* config keys and share their defaults.
    #[staticmethod]
    #[pyo3(signature = (p=40, n=200, c=2, informative=4, strength=2.0, noise=1.0, seed=0, priors=None))]
    #[allow(clippy::too_many_arguments)]
    fn synth(
        p: usize,
        n: usize,
        c: usize,
        informative: usize,
        strength: f64,
        noise: f64,
        seed: u64,
        priors: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let spec = SynthSpec {
            p,
            n,
            c,
            informative_components: informative,
            signal_strength: strength,
            noise_std: noise,
            priors: priors.unwrap_or_default(),
            seed,
        };
        covscale::synth_generate(&spec)
            .map(|inner| PyDataset { inner })
            .map_err(to_py_err)
    }

    #[staticmethod]
    fn from_csv(path: PathBuf) -> PyResult<Self> {
        covscale::load_csv(&path)
            .map(|inner| PyDataset { inner })
            .map_err(to_py_err)
    }

    fn to_csv(&self, path: PathBuf) -> PyResult<()> {
        covscale::save_csv(&self.inner, &path).map_err(to_py_err)
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_samples())
            .map(|i| self.inner.features.column(i).to_vec())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} samples x {} features, {} classes)",
            self.inner.n_samples(),
            self.inner.n_features(),
            self.inner.class_names.len()
        )
    }
}

/// A finished experiment: models, fold plan, metrics, and the dataset they
/// came from. Wraps the same artifact the CLI writes as artifact.json.
#[pyclass(name = "Run")]
struct PyRun {
    inner: covscale::RunArtifact,
}

#[pymethods]
impl PyRun {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        covscale::RunArtifact::load(&path)
            .map(|inner| PyRun { inner })
            .map_err(to_py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py_err)
    }

    /// Re-evaluate every stored model against its held-out fold and fail if
    /// anything disagrees with the stored metrics.
    fn verify(&self) -> PyResult<()> {
        self.inner.verify().map_err(to_py_err)
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn config(&self) -> String {
        self.inner.config_snapshot.clone()
    }

    #[getter]
    fn dataset(&self) -> PyDataset {
        PyDataset {
            inner: self.inner.dataset.clone(),
        }
    }

    /// One dict per trained model: label, kind, fold count, and the
    /// mean/std of each cross-validated metric.
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .runs
            .iter()
            .map(|report| {
                let d = PyDict::new(py);
                d.set_item("label", &report.label)?;
                d.set_item("model", report.model_kind.to_string())?;
                d.set_item("folds", report.folds.len())?;
                d.set_item("accuracy_mean", report.mean.accuracy)?;
                d.set_item("accuracy_std", report.std.accuracy)?;
                d.set_item("precision_mean", report.mean.macro_precision)?;
                d.set_item("precision_std", report.std.macro_precision)?;
                d.set_item("recall_mean", report.mean.macro_recall)?;
                d.set_item("recall_std", report.std.macro_recall)?;
                Ok(d)
            })
            .collect()
    }

    /// Saliency ranking for one sample as (region, class, saliency, rank)
    /// tuples, attributed by the model whose fold held the sample out.
    #[pyo3(signature = (sample, target="probability"))]
    fn interpret(&self, sample: usize, target: &str) -> PyResult<Vec<(String, String, f64, usize)>> {
        let rows = covscale::interpret_sample(&self.inner, sample, parse_target(target)?)
            .map_err(to_py_err)?;
        Ok(rows
            .into_iter()
            .map(|r| (r.region, r.class, r.saliency, r.rank))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Run(kind='{}', runs={}, seed={})",
            self.inner.kind,
            self.inner.runs.len(),
            self.inner.seed
        )
    }
}

/// Cross-validate one model on the dataset. config takes the same keys as
/// the CLI's --set (see the README table).
#[pyfunction]
#[pyo3(signature = (data, model="ours", config=None))]
fn run_cv(
    data: &PyDataset,
    model: &str,
    config: Option<HashMap<String, Bound<'_, PyAny>>>,
) -> PyResult<PyRun> {
    let kind: ModelKind = model
        .parse()
        .map_err(|e: covscale::Error| to_py_err(e))?;
    let cfg = build_config(config)?;
    covscale::run_cv(&data.inner, kind, &cfg)
        .map(|inner| PyRun { inner })
        .map_err(to_py_err)
}

/// Cross-validate the scale model at each J, trained and frozen.
#[pyfunction]
#[pyo3(signature = (data, j_list, config=None))]
fn sweep(
    data: &PyDataset,
    j_list: Vec<usize>,
    config: Option<HashMap<String, Bound<'_, PyAny>>>,
) -> PyResult<PyRun> {
    let cfg = build_config(config)?;
    covscale::sweep_scales(&data.inner, &j_list, &cfg)
        .map(|inner| PyRun { inner })
        .map_err(to_py_err)
}

/// Race the scale model against the wide 2-layer baseline at each learning
/// rate, logging per-epoch test accuracy.
#[pyfunction]
#[pyo3(signature = (data, lrs, config=None))]
fn converge(
    data: &PyDataset,
    lrs: Vec<f64>,
    config: Option<HashMap<String, Bound<'_, PyAny>>>,
) -> PyResult<PyRun> {
    let cfg = build_config(config)?;
    covscale::compare_convergence(&data.inner, &cfg, &lrs)
        .map(|inner| PyRun { inner })
        .map_err(to_py_err)
}

/// Band-pass kernel g(x).
#[pyfunction]
#[pyo3(signature = (x, alpha=2.0, beta=2.0, x1=1.0, x2=2.0))]
fn kernel_eval(x: f64, alpha: f64, beta: f64, x1: f64, x2: f64) -> PyResult<f64> {
    let spec = KernelSpec::new(alpha, beta, x1, x2).map_err(to_py_err)?;
    Ok(spec.eval(x))
}

/// Analytic derivative g'(x).
#[pyfunction]
#[pyo3(signature = (x, alpha=2.0, beta=2.0, x1=1.0, x2=2.0))]
fn kernel_deriv(x: f64, alpha: f64, beta: f64, x1: f64, x2: f64) -> PyResult<f64> {
    let spec = KernelSpec::new(alpha, beta, x1, x2).map_err(to_py_err)?;
    Ok(spec.deriv(x))
}

/// Trainable parameters of the scale model: C weights per embedding entry,
/// C biases, J scales.
#[pyfunction]
fn param_count(p: usize, c: usize, j: usize) -> usize {
    covscale::model::param_count(p, c, j)
}

#[pymodule]
fn covscale_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(run_cv, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(converge, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_eval, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_deriv, m)?)?;
    m.add_function(wrap_pyfunction!(param_count, m)?)?;
    Ok(())
}
