//! Python bindings. Composite results cross the boundary as plain dicts built from the
//! same JSON the CLI writes.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use stratify_core::classifiers::{self, AlgorithmId, HyperparameterSet, TrainedModel};
use stratify_core::clustering::{
    kmeans_fit, select_k as core_select_k, KMeansConfig, SelectConfig,
};
use stratify_core::dataset::LabeledDataset;
use stratify_core::pipeline::{self, Arms, DataFormat, DataSource, RunConfig};
use stratify_core::resampling::{smote as core_smote, SmoteConfig};
use stratify_core::{evaluation, synthcohort, Error, Matrix};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_dict<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(v).map_err(json_err)?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py)
}

fn algorithm(name: &str) -> PyResult<AlgorithmId> {
    AlgorithmId::ALL
        .iter()
        .copied()
        .find(|a| a.as_str().eq_ignore_ascii_case(name))
        .ok_or_else(|| PyValueError::new_err(format!("unknown algorithm {name:?}")))
}

/// Numeric feature matrix with a binary outcome.
#[pyclass(module = "stratify", frozen)]
pub struct Dataset {
    inner: LabeledDataset,
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (x, y, feature_names, outcome = "certified".to_string()))]
    fn new(
        x: Vec<Vec<f64>>,
        y: Vec<u8>,
        feature_names: Vec<String>,
        outcome: String,
    ) -> PyResult<Self> {
        let inner = LabeledDataset::new(matrix(x)?, y, feature_names, outcome).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Loads a cleaned CSV (`format="clean"`) or a raw person-course export.
    #[staticmethod]
    #[pyo3(signature = (path, format = "clean"))]
    fn from_csv(path: PathBuf, format: &str) -> PyResult<Self> {
        let format = match format {
            "clean" => DataFormat::Clean,
            "person_course" => DataFormat::PersonCourse,
            f => return Err(PyValueError::new_err(format!("unknown format {f:?}"))),
        };
        let src = DataSource {
            path,
            format,
            schema: None,
        };
        Ok(Self {
            inner: src.load().map_err(to_py)?,
        })
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.x.rows()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn y(&self) -> Vec<u8> {
        self.inner.y.clone()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.x.iter_rows().map(|r| r.to_vec()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.x.rows()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(rows={}, features={}, positives={})",
            self.inner.x.rows(),
            self.inner.x.cols(),
            self.inner.y.iter().filter(|&&v| v == 1).count()
        )
    }
}

/// A fitted classifier.
#[pyclass(module = "stratify", frozen)]
pub struct Model {
    inner: TrainedModel,
}

#[pymethods]
impl Model {
    /// `hyperparameters` is the JSON form used in run configs; omitted means defaults.
    #[staticmethod]
    #[pyo3(signature = (algorithm_name, x, y, seed = 0, hyperparameters = None))]
    fn fit(
        algorithm_name: &str,
        x: Vec<Vec<f64>>,
        y: Vec<u8>,
        seed: u64,
        hyperparameters: Option<&str>,
    ) -> PyResult<Self> {
        let hp = match hyperparameters {
            Some(s) => serde_json::from_str::<HyperparameterSet>(s).map_err(json_err)?,
            None => HyperparameterSet::default_for(algorithm(algorithm_name)?),
        };
        if hp.algorithm() != algorithm(algorithm_name)? {
            return Err(PyValueError::new_err(
                "hyperparameters belong to a different algorithm",
            ));
        }
        let inner = classifiers::fit(&hp, &matrix(x)?, &y, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self {
            inner: TrainedModel::from_json(s).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn algorithm(&self) -> &'static str {
        self.inner.algorithm().as_str()
    }

    fn predict_proba(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.predict_scores(&matrix(x)?).map_err(to_py)
    }

    #[pyo3(signature = (x, threshold = 0.5))]
    fn predict(&self, x: Vec<Vec<f64>>, threshold: f64) -> PyResult<Vec<u8>> {
        let s = self.inner.predict_scores(&matrix(x)?).map_err(to_py)?;
        Ok(classifiers::predict_labels(&s, threshold))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model({}, features={})",
            self.inner.algorithm().as_str(),
            self.inner.n_features
        )
    }
}

/// Synthetic cohort drawn from the built-in two-pattern spec, or from a spec given as JSON.
/// Returns the dataset and the planted pattern of each row.
#[pyfunction]
#[pyo3(signature = (n, seed = 0, spec = None))]
fn synth(n: usize, seed: u64, spec: Option<&str>) -> PyResult<(Dataset, Vec<usize>)> {
    let spec = match spec {
        Some(s) => serde_json::from_str(s).map_err(json_err)?,
        None => synthcohort::reference_spec(),
    };
    let c = synthcohort::generate(&spec, n, seed).map_err(to_py)?;
    Ok((Dataset { inner: c.dataset }, c.true_pattern))
}

/// Confusion matrix, both metric views and AUC of one score vector.
#[pyfunction]
#[pyo3(signature = (y_true, scores, threshold = 0.5))]
fn evaluate(
    py: Python<'_>,
    y_true: Vec<u8>,
    scores: Vec<f64>,
    threshold: f64,
) -> PyResult<Py<PyAny>> {
    let (report, _) = evaluation::evaluate(&y_true, &scores, threshold).map_err(to_py)?;
    to_dict(py, &report)
}

#[pyfunction]
fn cramers_v(chi2: f64, n: u64, rows: usize, cols: usize) -> PyResult<f64> {
    evaluation::cramers_v(chi2, n, rows, cols).map_err(to_py)
}

/// Labels and inertia of the best of `restarts` k-means++ runs.
#[pyfunction]
#[pyo3(signature = (x, k, seed = 0, restarts = 10))]
fn kmeans(x: Vec<Vec<f64>>, k: usize, seed: u64, restarts: usize) -> PyResult<(Vec<usize>, f64)> {
    let cfg = KMeansConfig {
        restarts,
        ..KMeansConfig::new(k, seed)
    };
    let fit = kmeans_fit(&matrix(x)?, &cfg).map_err(to_py)?;
    Ok((fit.assignment.labels, fit.model.inertia))
}

/// Index vote over K in `[k_min, k_max]`.
#[pyfunction]
#[pyo3(signature = (x, seed = 0, k_min = 2, k_max = 8))]
fn select_k(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    seed: u64,
    k_min: usize,
    k_max: usize,
) -> PyResult<Py<PyAny>> {
    let cfg = SelectConfig {
        k_min,
        k_max,
        ..SelectConfig::default()
    };
    let s = core_select_k(&matrix(x)?, &cfg, seed).map_err(to_py)?;
    to_dict(py, &s.report)
}

/// Oversamples the minority class; returns the augmented rows and labels.
#[pyfunction]
#[pyo3(signature = (x, y, seed = 0, k_neighbors = 5))]
fn smote(
    x: Vec<Vec<f64>>,
    y: Vec<u8>,
    seed: u64,
    k_neighbors: usize,
) -> PyResult<(Vec<Vec<f64>>, Vec<u8>)> {
    let cfg = SmoteConfig {
        k_neighbors,
        ..SmoteConfig::default()
    };
    let r = core_smote(&matrix(x)?, &y, &cfg, seed).map_err(to_py)?;
    Ok((r.x.iter_rows().map(|r| r.to_vec()).collect(), r.y))
}

/// Runs both arms (or one) and returns the comparison and per-arm reports. When `out` is
/// given, the full artifact set is written there as well.
#[pyfunction]
#[pyo3(signature = (dataset, config = None, arm = "both", out = None))]
fn run(
    py: Python<'_>,
    dataset: &Dataset,
    config: Option<&str>,
    arm: &str,
    out: Option<PathBuf>,
) -> PyResult<Py<PyAny>> {
    let cfg: RunConfig = match config {
        Some(s) => serde_json::from_str(s).map_err(json_err)?,
        None => RunConfig::default(),
    };
    let arms = match arm {
        "both" => Arms::Both,
        "integration" => Arms::Integration,
        "direct" => Arms::Direct,
        a => return Err(PyValueError::new_err(format!("unknown arm {a:?}"))),
    };
    let ds = &dataset.inner;
    let res = py.detach(|| -> stratify_core::Result<_> {
        let res = pipeline::run(&cfg, ds, arms)?;
        let written = match &out {
            Some(dir) => pipeline::write_artifacts(dir, &cfg, ds, &res)?,
            None => Vec::new(),
        };
        Ok((res, written))
    });
    let (res, written) = res.map_err(to_py)?;
    let integration = res.integration.as_ref().map(|i| {
        serde_json::json!({
            "sizes": i.discovery.assignment.sizes,
            "kselect": i.discovery.kselect,
            "pooled": i.pooled,
        })
    });
    let direct = res.direct.as_ref().map(|d| {
        d.run
            .results
            .iter()
            .map(|r| (r.algorithm.as_str(), &r.report))
            .collect::<std::collections::BTreeMap<_, _>>()
    });
    let doc = serde_json::json!({
        "integration": integration,
        "direct": direct,
        "comparison": res.comparison,
        "degenerate": res.is_degenerate(),
        "artifacts": written,
    });
    to_dict(py, &doc)
}

#[pymodule]
fn stratify(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", stratify_core::VERSION)?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(cramers_v, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(select_k, m)?)?;
    m.add_function(wrap_pyfunction!(smote, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
