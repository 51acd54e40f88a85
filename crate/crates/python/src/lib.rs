//! Python bindings. Parameters are plain floats; every statistic comes back
//! either as a float or as a `SeriesValue`/`Estimate` carrying its error
//! estimate.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use kmsprod::fading;
use kmsprod::metrics;
use kmsprod::oracle;
use kmsprod::product::{self, ProductDistribution, ProductModel};
use kmsprod::specfun::{self, TruncationPolicy};
use kmsprod::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::InvalidArgument(_) | Error::StripViolation { .. } | Error::PoleArgument { .. } => {
            PyValueError::new_err(e.to_string())
        }
        Error::CaseMismatch { .. } | Error::IndexBelowGap { .. } => PyValueError::new_err(e.to_string()),
        _ => PyArithmeticError::new_err(e.to_string()),
    }
}

/// One κ-μ shadowed link.
#[pyclass(name = "ShadowedParams", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyParams {
    inner: fading::ShadowedParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (kappa, mu, m, gamma_bar = 1.0))]
    fn new(kappa: f64, mu: f64, m: f64, gamma_bar: f64) -> PyResult<Self> {
        Ok(PyParams {
            inner: fading::ShadowedParams::new(kappa, mu, m, gamma_bar).map_err(py_err)?,
        })
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }

    #[getter]
    fn m(&self) -> f64 {
        self.inner.m
    }

    #[getter]
    fn gamma_bar(&self) -> f64 {
        self.inner.gamma_bar
    }

    fn pdf(&self, x: f64) -> PyResult<f64> {
        Ok(fading::pdf_single(&self.inner, x).map_err(py_err)?.value)
    }

    fn cdf(&self, x: f64) -> PyResult<f64> {
        fading::cdf_single(&self.inner, x).map_err(py_err)
    }

    fn mgf(&self, s: f64) -> PyResult<f64> {
        fading::mgf_single(&self.inner, s).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        let p = self.inner;
        format!("ShadowedParams(kappa={}, mu={}, m={}, gamma_bar={})", p.kappa, p.mu, p.m, p.gamma_bar)
    }
}

#[pyclass(name = "SeriesValue", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySeriesValue {
    #[pyo3(get)]
    value: f64,
    #[pyo3(get)]
    terms_used: usize,
    #[pyo3(get)]
    tail_estimate: f64,
    #[pyo3(get)]
    rounding_error: f64,
    #[pyo3(get)]
    max_term_ratio: f64,
    #[pyo3(get)]
    warnings: Vec<String>,
}

fn warning_names<T: std::fmt::Debug>(ws: &[T]) -> Vec<String> {
    ws.iter().map(|w| format!("{w:?}")).collect()
}

impl From<specfun::SeriesValue> for PySeriesValue {
    fn from(v: specfun::SeriesValue) -> Self {
        PySeriesValue {
            value: v.value,
            terms_used: v.terms_used,
            tail_estimate: v.tail_estimate,
            rounding_error: v.rounding_error,
            max_term_ratio: v.max_term_ratio,
            warnings: warning_names(&v.warnings),
        }
    }
}

#[pymethods]
impl PySeriesValue {
    fn __float__(&self) -> f64 {
        self.value
    }

    fn __repr__(&self) -> String {
        format!(
            "SeriesValue(value={}, terms_used={}, tail_estimate={:e})",
            self.value, self.terms_used, self.tail_estimate
        )
    }
}

#[pyclass(name = "Estimate", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyEstimate {
    #[pyo3(get)]
    value: f64,
    #[pyo3(get)]
    error_estimate: f64,
    /// "series", "convolution" or "quadrature"
    #[pyo3(get)]
    source: String,
    #[pyo3(get)]
    warnings: Vec<String>,
}

impl From<product::Estimate> for PyEstimate {
    fn from(e: product::Estimate) -> Self {
        PyEstimate {
            value: e.value,
            error_estimate: e.error_estimate,
            source: kmsprod::validate::source_name(e.source).to_string(),
            warnings: warning_names(&e.warnings),
        }
    }
}

#[pymethods]
impl PyEstimate {
    fn __float__(&self) -> f64 {
        self.value
    }

    fn __repr__(&self) -> String {
        format!("Estimate(value={}, error_estimate={:e}, source='{}')", self.value, self.error_estimate, self.source)
    }
}

fn policy(rel_tol: Option<f64>, max_terms: Option<usize>) -> PyResult<TruncationPolicy> {
    let d = TruncationPolicy::default();
    TruncationPolicy::new(rel_tol.unwrap_or(d.rel_tol), d.abs_tol, max_terms.unwrap_or(d.max_terms), d.consecutive_small)
        .map_err(py_err)
}

/// The product of two independent links. Raw series evaluations live on
/// the model; `pdf`, `cdf` and `mgf` fall back to quadrature where the
/// series loses precision.
#[pyclass(name = "ProductModel", frozen, skip_from_py_object)]
struct PyProductModel {
    dist: ProductDistribution,
}

impl PyProductModel {
    fn model(&self) -> &ProductModel {
        self.dist.model()
    }
}

#[pymethods]
impl PyProductModel {
    #[new]
    #[pyo3(signature = (first, second, rel_tol = None, max_terms = None))]
    fn new(first: PyParams, second: PyParams, rel_tol: Option<f64>, max_terms: Option<usize>) -> PyResult<Self> {
        let model = ProductModel::new(first.inner, second.inner).map_err(py_err)?;
        Ok(PyProductModel {
            dist: ProductDistribution::new(model, policy(rel_tol, max_terms)?).map_err(py_err)?,
        })
    }

    /// `μ2 - μ1` after ordering the links by μ.
    #[getter]
    fn gap(&self) -> f64 {
        self.model().gap()
    }

    #[getter]
    fn integer_gap(&self) -> bool {
        matches!(self.model().case(), product::GapCase::IntegerGap(_))
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.model().mean()
    }

    fn pdf(&self, y: f64) -> PyResult<PyEstimate> {
        Ok(self.dist.pdf(y).map_err(py_err)?.into())
    }

    fn cdf(&self, y: f64) -> PyResult<PyEstimate> {
        Ok(self.dist.cdf(y).map_err(py_err)?.into())
    }

    fn mgf(&self, s: f64) -> PyResult<PyEstimate> {
        Ok(self.dist.mgf(s).map_err(py_err)?.into())
    }

    fn pdf_series(&self, y: f64) -> PyResult<PySeriesValue> {
        Ok(product::pdf_product(self.model(), y, self.dist.policy()).map_err(py_err)?.into())
    }

    fn cdf_series(&self, y: f64) -> PyResult<PySeriesValue> {
        Ok(product::cdf_product(self.model(), y, self.dist.policy()).map_err(py_err)?.into())
    }

    fn mgf_series(&self, s: f64) -> PyResult<PySeriesValue> {
        Ok(product::mgf_product(self.model(), s, self.dist.policy()).map_err(py_err)?.into())
    }

    fn moment(&self, n: u32) -> PyResult<f64> {
        product::moment_product(self.model(), n).map_err(py_err)
    }

    fn mellin(&self, s: f64) -> PyResult<f64> {
        product::mellin_product(self.model(), s).map_err(py_err)
    }

    fn amount_of_fading(&self) -> f64 {
        metrics::amount_of_fading(self.model())
    }

    fn cqei(&self) -> f64 {
        metrics::cqei(self.model())
    }

    /// Outage of a variable-gain relay whose relay-destination hop is this
    /// cascade.
    fn relay_outage(&self, source_relay: PyParams, gamma_th: f64) -> PyResult<f64> {
        let f_sr = fading::cdf_single(&source_relay.inner, gamma_th).map_err(py_err)?;
        let f_rd = self.dist.cdf(gamma_th).map_err(py_err)?.value;
        Ok(metrics::relay_outage(f_sr, f_rd))
    }

    /// Density by direct numerical convolution of the link densities.
    fn pdf_convolution(&self, y: f64) -> PyResult<f64> {
        oracle::pdf_by_convolution(self.model(), y).map_err(py_err)
    }

    #[pyo3(signature = (count, seed = 42))]
    fn sample(&self, py: Python<'_>, count: usize, seed: u64) -> PyResult<Vec<f64>> {
        let model = self.model();
        py.detach(|| oracle::sample_product_seeded(model, seed, count)).map_err(py_err)
    }
}

/// `∂/∂b 2F1(a, b; c; z)` at `b = -n`.
#[pyfunction]
fn gauss_2f1_db(a: f64, n: u32, c: f64, z: f64) -> PyResult<f64> {
    Ok(specfun::gauss_2f1_db_at_neg_int(a, n, c, z, &TruncationPolicy::default())
        .map_err(py_err)?
        .value)
}

#[pyfunction]
fn gauss_2f1(a: f64, b: f64, c: f64, z: f64) -> PyResult<f64> {
    Ok(specfun::gauss_2f1(a, b, c, z, &TruncationPolicy::default()).map_err(py_err)?.value)
}

#[pyfunction]
fn kummer_1f1(a: f64, b: f64, z: f64) -> PyResult<f64> {
    Ok(specfun::kummer_1f1(a, b, z, &TruncationPolicy::default()).map_err(py_err)?.value)
}

#[pymodule]
#[pyo3(name = "kmsprod")]
fn kmsprod_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyProductModel>()?;
    m.add_class::<PySeriesValue>()?;
    m.add_class::<PyEstimate>()?;
    m.add_function(wrap_pyfunction!(gauss_2f1, m)?)?;
    m.add_function(wrap_pyfunction!(gauss_2f1_db, m)?)?;
    m.add_function(wrap_pyfunction!(kummer_1f1, m)?)?;
    m.add("__version__", kmsprod::VERSION)?;
    Ok(())
}
