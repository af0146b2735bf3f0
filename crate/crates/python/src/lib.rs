//! Python bindings: the `qrec` extension module.

use std::borrow::Cow;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use qrec_core::experiment::{self, ExperimentConfig};
use qrec_core::linalg;
use qrec_core::qproject;
use qrec_core::recsys::{self, TypeRule};
use qrec_core::rng::stream;
use qrec_core::sample_tree::{self, Triplet};
use qrec_core::{DenseMatrix, Error, ProjectionParams, SveEngine, SvePath};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::ProjectionEmpty { .. } | Error::RegisterTooLarge { .. } => PyRuntimeError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn dense(rows: Vec<Vec<f64>>) -> PyResult<DenseMatrix> {
    DenseMatrix::from_rows(&rows).map_err(to_py)
}

fn rows_of(a: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..a.rows()).map(|i| a.row(i).to_vec()).collect()
}

fn parse_path(path: &str) -> PyResult<SvePath> {
    path.parse().map_err(to_py)
}

/// Tree-of-trees store of a sparse matrix supporting l2 sampling.
#[pyclass(name = "MatrixStore", module = "qrec", skip_from_py_object)]
#[derive(Clone)]
struct PyMatrixStore {
    inner: sample_tree::MatrixStore,
}

#[pymethods]
impl PyMatrixStore {
    #[new]
    fn new(rows: usize, cols: usize) -> PyResult<Self> {
        Ok(Self {
            inner: sample_tree::MatrixStore::new(rows, cols).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_dense(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: sample_tree::MatrixStore::from_dense(&dense(rows)?).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (triplets, rows=None, cols=None))]
    fn from_triplets(triplets: Vec<(usize, usize, f64)>, rows: Option<usize>, cols: Option<usize>) -> PyResult<Self> {
        let triplets: Vec<Triplet> = triplets.into_iter().map(|(row, col, value)| Triplet { row, col, value }).collect();
        Ok(Self {
            inner: sample_tree::MatrixStore::from_triplets(&triplets, rows, cols).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn deserialize(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: sample_tree::MatrixStore::deserialize(data).map_err(to_py)?,
        })
    }

    fn serialize(&self) -> Cow<'_, [u8]> {
        Cow::Owned(self.inner.serialize())
    }

    /// Set entry `(i, j)`; returns the number of tree nodes touched.
    fn insert(&mut self, i: usize, j: usize, value: f64) -> PyResult<usize> {
        self.inner.insert(i, j, value).map_err(to_py)
    }

    fn get(&self, i: usize, j: usize) -> PyResult<f64> {
        self.inner.get(i, j).map_err(to_py)
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    #[getter]
    fn entry_count(&self) -> usize {
        self.inner.entry_count()
    }

    fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    fn row_norm(&self, i: usize) -> PyResult<f64> {
        self.inner.row_norm(i).map_err(to_py)
    }

    /// Weight of the node reached from row `i`'s root by the bit string `prefix`.
    fn subtree_weight(&self, i: usize, prefix: &str) -> PyResult<f64> {
        self.inner.subtree_weight(i, prefix).map_err(to_py)
    }

    #[pyo3(signature = (count, seed=0))]
    fn sample_entries(&self, count: usize, seed: u64) -> PyResult<Vec<(usize, usize)>> {
        let mut rng = stream(seed, "measurement");
        (0..count).map(|_| self.inner.l2_sample_entry(&mut rng).map_err(to_py)).collect()
    }

    fn to_dense(&self) -> Vec<Vec<f64>> {
        rows_of(&self.inner.to_dense())
    }

    fn __repr__(&self) -> String {
        format!(
            "MatrixStore(rows={}, cols={}, entries={})",
            self.inner.rows(),
            self.inner.cols(),
            self.inner.entry_count()
        )
    }
}

/// `(U, singular values, V)` with singular vectors as lists of rows.
#[pyfunction]
fn svd(rows: Vec<Vec<f64>>) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>)> {
    let f = linalg::svd(&dense(rows)?).map_err(to_py)?;
    Ok((f.left, f.singular_values, f.right))
}

/// Singular value estimation of `x`; returns the JSON document of the output.
#[pyfunction]
#[pyo3(signature = (store, x, epsilon, path="exact", seed=0))]
fn sve(store: &PyMatrixStore, x: Vec<f64>, epsilon: f64, path: &str, seed: u64) -> PyResult<String> {
    let engine = SveEngine::new(&store.inner).map_err(to_py)?;
    let out = engine
        .sve(&x, epsilon, parse_path(path)?, &mut stream(seed, "measurement"))
        .map_err(to_py)?;
    serde_json::to_string(&out).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Threshold projection of `x`; returns `(state, kept, iterations)`.
#[pyfunction]
#[pyo3(signature = (store, x, sigma, kappa=1.0/3.0, path="exact", seed=0))]
fn threshold_project(
    store: &PyMatrixStore,
    x: Vec<f64>,
    sigma: f64,
    kappa: f64,
    path: &str,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<usize>, usize)> {
    let engine = SveEngine::new(&store.inner).map_err(to_py)?;
    let params = ProjectionParams::new(sigma, kappa).map_err(to_py)?;
    let out = qproject::threshold_project(&engine, &x, params, parse_path(path)?, &mut stream(seed, "projection"))
        .map_err(to_py)?;
    Ok((out.state, out.kept, out.iterations))
}

/// Draw `count` product recommendations for `user`.
#[pyfunction]
#[pyo3(signature = (store, user, sigma, kappa=1.0/3.0, path="exact", count=1, seed=0))]
fn recommend(
    store: &PyMatrixStore,
    user: usize,
    sigma: f64,
    kappa: f64,
    path: &str,
    count: usize,
    seed: u64,
) -> PyResult<Vec<usize>> {
    let params = ProjectionParams::new(sigma, kappa).map_err(to_py)?;
    let rec = recsys::Recommender::new(store.inner.clone(), params, parse_path(path)?).map_err(to_py)?;
    let prepared = rec.prepare_user(user).map_err(to_py)?;
    let mut rng = stream(seed, "projection");
    (0..count)
        .map(|_| {
            let outcome = prepared.run(&mut rng).map_err(to_py)?;
            Ok(recsys::Recommender::measure(user, &outcome, &mut rng).product)
        })
        .collect()
}

#[pyfunction]
fn recommendation_sigma(subsample_frobenius: f64, k: usize, epsilon: f64, p: f64) -> f64 {
    recsys::recommendation_sigma(subsample_frobenius, k, epsilon, p)
}

#[pyfunction]
fn bad_sample_bound(epsilon: f64) -> PyResult<f64> {
    recsys::bad_sample_bound(epsilon).map_err(to_py)
}

#[pyfunction]
fn typical_user_bound(epsilon: f64, gamma: f64, delta: f64, zeta: f64) -> PyResult<f64> {
    recsys::typical_user_bound(epsilon, gamma, delta, zeta).map_err(to_py)
}

/// Binary preference matrix of `k` user types plus flip noise.
#[pyfunction]
#[pyo3(signature = (users, products, k, noise=0.05, density=0.5, seed=0))]
fn generate_preferences(
    users: usize,
    products: usize,
    k: usize,
    noise: f64,
    density: f64,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let model = recsys::PreferenceModel::generate(
        users,
        products,
        k,
        noise,
        TypeRule::Random { density },
        &mut stream(seed, "model"),
    )
    .map_err(to_py)?;
    Ok(rows_of(model.matrix()))
}

/// Run an experiment from a JSON config string; returns the JSON report.
#[pyfunction]
fn run_experiment(config_json: &str) -> PyResult<String> {
    let config: ExperimentConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(experiment::run(&config).map_err(to_py)?.to_json())
}

#[pymodule]
fn qrec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMatrixStore>()?;
    m.add_function(wrap_pyfunction!(svd, m)?)?;
    m.add_function(wrap_pyfunction!(sve, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_project, m)?)?;
    m.add_function(wrap_pyfunction!(recommend, m)?)?;
    m.add_function(wrap_pyfunction!(recommendation_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(bad_sample_bound, m)?)?;
    m.add_function(wrap_pyfunction!(typical_user_bound, m)?)?;
    m.add_function(wrap_pyfunction!(generate_preferences, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
