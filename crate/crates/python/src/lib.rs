//! Python bindings: fit a model from nested lists and query entry-wise
//! inference and hidden-effect tests.

use ::latentreg as core;
use core::{DMatrix, FactorCount, PipelineConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py_err(e: core::Error) -> PyErr {
    match e {
        core::Error::InvalidArgument(_) | core::Error::Dimension(_) | core::Error::Empty(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_matrix(rows: Vec<Vec<f64>>, name: &str) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err(format!("{name} has ragged rows")));
    }
    Ok(DMatrix::from_row_iterator(n, p, rows.into_iter().flatten()))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Debiased estimate, test and confidence interval for one entry of Θ.
#[pyclass(name = "ThetaInference", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct PyThetaInference {
    pub i: usize,
    pub j: usize,
    pub theta_init: f64,
    pub theta_debiased: f64,
    pub std_error: f64,
    pub u_stat: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub reject: bool,
}

#[pymethods]
impl PyThetaInference {
    fn __repr__(&self) -> String {
        format!(
            "ThetaInference(i={}, j={}, estimate={:.6}, p_value={:.4e})",
            self.i, self.j, self.theta_debiased, self.p_value
        )
    }
}

/// χ² test of `B_j = 0`.
#[pyclass(name = "HiddenEffectResult", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct PyHiddenEffect {
    pub j: usize,
    pub r_stat: f64,
    pub df: usize,
    pub p_value: f64,
    pub reject: bool,
}

#[pymethods]
impl PyHiddenEffect {
    fn __repr__(&self) -> String {
        format!("HiddenEffectResult(j={}, r_stat={:.6}, p_value={:.4e})", self.j, self.r_stat, self.p_value)
    }
}

/// A fitted model. `k=None` selects the number of hidden variables.
#[pyclass(name = "FittedModel", frozen)]
pub struct PyFittedModel {
    inner: core::FittedModel,
}

#[pymethods]
impl PyFittedModel {
    #[new]
    #[pyo3(signature = (x, y, k=None, seed=0, cross_validate=true))]
    fn new(py: Python<'_>, x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, k: Option<usize>, seed: u64, cross_validate: bool) -> PyResult<Self> {
        let data = core::Dataset::new(to_matrix(x, "x")?, to_matrix(y, "y")?).map_err(to_py_err)?;
        let mut config = PipelineConfig {
            seed,
            factors: k.map_or(FactorCount::Select { k_bar: None }, FactorCount::Fixed),
            ..Default::default()
        };
        config.tuning.cross_validate = cross_validate;
        let inner = py.detach(|| core::FittedModel::fit(data, config)).map_err(to_py_err)?;
        Ok(PyFittedModel { inner })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        let d = self.inner.data();
        (d.n(), d.p(), d.m())
    }

    /// Lava coefficient estimate, `p × m`.
    fn f_hat(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.lava().f_hat)
    }

    /// Estimated loadings, `K × m`.
    fn b_hat(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.factors().b_hat)
    }

    fn sigma2(&self) -> Vec<f64> {
        self.inner.factors().sigma2_e.iter().copied().collect()
    }

    /// Inference for `Θ[i, j]` (0-based).
    #[pyo3(signature = (i, j, alpha=0.05))]
    fn infer_theta(&self, py: Python<'_>, i: usize, j: usize, alpha: f64) -> PyResult<PyThetaInference> {
        let r = py.detach(|| self.inner.infer_entry(i, j, alpha)).map_err(to_py_err)?;
        Ok(PyThetaInference {
            i: r.i,
            j: r.j,
            theta_init: r.theta_init,
            theta_debiased: r.theta_debiased,
            std_error: r.std_error(),
            u_stat: r.u_stat,
            p_value: r.p_value,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            reject: r.reject,
        })
    }

    #[pyo3(signature = (j, alpha=0.05))]
    fn test_hidden(&self, j: usize, alpha: f64) -> PyResult<PyHiddenEffect> {
        let r = self.inner.hidden_effect_test(j, alpha).map_err(to_py_err)?;
        Ok(PyHiddenEffect {
            j: r.j,
            r_stat: r.r_stat,
            df: r.df,
            p_value: r.p_value,
            reject: r.reject,
        })
    }
}

/// Draws one synthetic data set; returns `(x, y, theta)` as nested lists.
#[pyfunction]
#[pyo3(signature = (n=200, p=50, m=20, k=3, eta=0.2, seed=0))]
#[allow(clippy::type_complexity)]
fn simulate(n: usize, p: usize, m: usize, k: usize, eta: f64, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let cfg = core::DgpConfig {
        n,
        p,
        m,
        k,
        eta,
        seed,
        ..Default::default()
    };
    let inst = core::generate_dgp(&cfg).map_err(to_py_err)?;
    Ok((to_rows(inst.data.x()), to_rows(inst.data.y()), to_rows(&inst.theta_true)))
}

#[pymodule(name = "latentreg")]
fn latentreg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFittedModel>()?;
    m.add_class::<PyThetaInference>()?;
    m.add_class::<PyHiddenEffect>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
