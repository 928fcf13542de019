//! Python bindings: tail primitives, data generation and the estimators.

use std::path::PathBuf;

use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nete_core::datagen::{self, NoiseKind, SyntheticConfig};
use nete_core::estimators::{self, EstimatorConfig, Method};
use nete_core::evt::{self, HillConfig, ParetoParams, ThresholdRule};
use nete_core::nuisance::OutcomeKind;
use nete_core::rng::seeded;
use nete_core::{AutoOr, NeteError};

fn to_py(err: NeteError) -> PyErr {
    match err {
        NeteError::Io { .. } | NeteError::Parse { .. } | NeteError::Schema { .. } | NeteError::Csv(_) => {
            PyOSError::new_err(err.to_string())
        }
        NeteError::InfiniteMoment { .. } | NeteError::EmptyTail { .. } => {
            PyArithmeticError::new_err(err.to_string())
        }
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>, name: &str) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err(format!("{name}: rows have different lengths")));
    }
    Array2::from_shape_vec((n, p), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn auto_or(value: Option<f64>) -> AutoOr {
    value.map_or(AutoOr::Auto, AutoOr::Fixed)
}

/// Observations `(X, D, Y, U)`; `x` and `u` are lists of rows.
#[pyclass(name = "ObservationTable", module = "nete")]
struct PyTable {
    inner: nete_core::ObservationTable,
}

#[pymethods]
impl PyTable {
    #[new]
    fn new(x: Vec<Vec<f64>>, d: Vec<f64>, y: Vec<f64>, u: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = nete_core::ObservationTable::new(
            matrix(x, "x")?,
            Array1::from(d),
            Array1::from(y),
            matrix(u, "u")?,
        )
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load_csv(path: PathBuf) -> PyResult<Self> {
        let inner = nete_core::ObservationTable::load_csv(&path).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn save_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_csv(&path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "ObservationTable(n={}, d_x={}, d_u={})",
            self.inner.len(),
            self.inner.d_x(),
            self.inner.d_u()
        )
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        rows(self.inner.x())
    }

    #[getter]
    fn d(&self) -> Vec<f64> {
        self.inner.d().to_vec()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y().to_vec()
    }

    #[getter]
    fn u(&self) -> Vec<Vec<f64>> {
        rows(self.inner.u())
    }

    /// l1 norms of the noise rows.
    fn norms(&self) -> Vec<f64> {
        self.inner.norms()
    }

    /// Rows with noise norm strictly above `t`.
    fn exceedances(&self, t: f64) -> Self {
        Self { inner: self.inner.exceedances(t) }
    }
}

#[pyfunction]
fn pareto_quantile(p: f64, beta: f64) -> PyResult<f64> {
    let params = ParetoParams::new(beta).map_err(to_py)?;
    evt::pareto_quantile(p, &params).map_err(to_py)
}

#[pyfunction]
fn hill_gamma(norms_desc: Vec<f64>, k: usize) -> PyResult<f64> {
    evt::hill_gamma(&norms_desc, k).map_err(to_py)
}

/// Returns `(gamma_hat, k)`.
#[pyfunction]
#[pyo3(signature = (norms, min_order = 30, band = None))]
fn adaptive_hill(norms: Vec<f64>, min_order: usize, band: Option<f64>) -> PyResult<(f64, usize)> {
    let est = evt::adaptive_hill_with(&norms, &HillConfig { min_order, band }).map_err(to_py)?;
    Ok((est.gamma_hat, est.k))
}

#[pyfunction]
fn moment_factor(alpha_hat: f64, gamma_hat: f64) -> PyResult<f64> {
    evt::moment_factor(alpha_hat, gamma_hat).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (n, gamma_hat, c0 = 0.25, fixed = None))]
fn select_threshold(n: usize, gamma_hat: f64, c0: f64, fixed: Option<f64>) -> PyResult<f64> {
    let rule = ThresholdRule { c0, mode: auto_or(fixed) };
    evt::select_threshold(n, gamma_hat, &rule).map_err(to_py)
}

#[pyfunction]
fn ground_truth_nete(alpha: f64, beta: f64) -> PyResult<f64> {
    datagen::ground_truth_nete(alpha, beta).map_err(to_py)
}

/// Returns `(table, ground_truth)`.
#[pyfunction]
#[pyo3(signature = (alpha, beta, n, d_z = 30, d_u = 5, noise_kind = "linear_pareto", d_x = 5, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn generate_synthetic(
    alpha: f64,
    beta: f64,
    n: usize,
    d_z: usize,
    d_u: usize,
    noise_kind: &str,
    d_x: usize,
    seed: u64,
) -> PyResult<(PyTable, f64)> {
    let noise_kind = match noise_kind {
        "linear_pareto" => NoiseKind::LinearPareto,
        "mixture" => NoiseKind::Mixture,
        other => return Err(PyValueError::new_err(format!("unknown noise kind `{other}`"))),
    };
    let cfg = SyntheticConfig {
        alpha,
        beta,
        d_z,
        d_u,
        noise_kind,
        d_x,
        n,
        seed,
        ..SyntheticConfig::default()
    };
    let (inner, truth) = datagen::generate_synthetic(&cfg, &mut seeded(seed)).map_err(to_py)?;
    Ok((PyTable { inner }, truth))
}

/// Runs the full pipeline for one method and returns the estimate as a dict.
/// `alpha` and `threshold` default to data-driven choices.
#[pyfunction]
#[pyo3(signature = (table, method = "evt_dr", seed = 0, alpha = None, threshold = None, outcome = "random_forest"))]
fn estimate_nete<'py>(
    py: Python<'py>,
    table: &PyTable,
    method: &str,
    seed: u64,
    alpha: Option<f64>,
    threshold: Option<f64>,
    outcome: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let method: Method = method.parse().map_err(PyValueError::new_err)?;
    let mut cfg = EstimatorConfig {
        alpha: auto_or(alpha),
        ..EstimatorConfig::default()
    };
    cfg.threshold.mode = auto_or(threshold);
    cfg.outcome = match outcome {
        "random_forest" => OutcomeKind::RandomForest,
        "linear" => OutcomeKind::Linear,
        other => return Err(PyValueError::new_err(format!("unknown outcome model `{other}`"))),
    };
    let est = py
        .detach(|| estimators::estimate_nete(&table.inner, method, &cfg, &mut seeded(seed)))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("method", est.method.as_str())?;
    out.set_item("eta_hat", est.eta_hat)?;
    out.set_item("mu_hat", est.mu_hat)?;
    out.set_item("theta_hat", est.theta_hat)?;
    out.set_item("threshold_t", est.threshold_t)?;
    out.set_item("n_tail", est.n_tail)?;
    out.set_item("alpha_hat", est.alpha_hat)?;
    out.set_item("gamma_hat", est.gamma_hat)?;
    out.set_item("hill_k", est.hill_k)?;
    out.set_item("gamma_threshold", est.gamma_threshold)?;
    out.set_item("n", est.n)?;
    Ok(out)
}

/// Min-shift plus one, then division by each column's 10% quantile.
#[pyfunction]
fn normalize_extremes(raw: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = matrix(raw, "raw")?;
    Ok(rows(&datagen::normalize_extremes(&m).map_err(to_py)?))
}

#[pyfunction]
fn test_set_estimate(test: &PyTable, alpha1: f64, alpha2: f64) -> PyResult<f64> {
    datagen::test_set_estimate(&test.inner, alpha1, alpha2).map_err(to_py)
}

#[pymodule]
fn nete(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTable>()?;
    m.add_function(wrap_pyfunction!(pareto_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(hill_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(adaptive_hill, m)?)?;
    m.add_function(wrap_pyfunction!(moment_factor, m)?)?;
    m.add_function(wrap_pyfunction!(select_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(ground_truth_nete, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_nete, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_extremes, m)?)?;
    m.add_function(wrap_pyfunction!(test_set_estimate, m)?)?;
    Ok(())
}
