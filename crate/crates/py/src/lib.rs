//! Python bindings for the boxtau toolkit: samples, conditioning boxes, tau
//! estimation, Wald and bootstrap tests, and the dependence tree.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use boxtau::bootstrap::{bootstrap_test as core_bootstrap_test, BootstrapConfig, Scheme, StatKind};
use boxtau::error::Error;
use boxtau::testing::TestResult;
use boxtau::tree::TreeConfig;
use boxtau::{CondBox, PairIndex, TauVariant};

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::SingularMatrix { .. } | Error::NonFinite(_) => {
            PyRuntimeError::new_err(err.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPyResult<T> {
    fn into_py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for boxtau::Result<T> {
    fn into_py(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

/// Immutable data matrix with conditioned (I) and conditioning (J) columns.
#[pyclass(name = "Sample", frozen)]
struct PySample {
    inner: boxtau::Sample,
}

#[pymethods]
impl PySample {
    /// Sample(rows, conditioned, conditioning, names=None)
    #[new]
    #[pyo3(signature = (rows, conditioned, conditioning, names = None))]
    fn new(
        rows: Vec<Vec<f64>>,
        conditioned: Vec<usize>,
        conditioning: Vec<usize>,
        names: Option<Vec<String>>,
    ) -> PyResult<Self> {
        Ok(PySample {
            inner: boxtau::Sample::from_rows(rows, conditioned, conditioning, names).into_py()?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// Number of conditioned variables.
    #[getter]
    fn p(&self) -> usize {
        self.inner.conditioned_dim()
    }

    /// Number of conditioning coordinates.
    #[getter]
    fn q(&self) -> usize {
        self.inner.conditioning_dim()
    }

    fn __repr__(&self) -> String {
        format!(
            "Sample(n={}, p={}, q={})",
            self.inner.n(),
            self.inner.conditioned_dim(),
            self.inner.conditioning_dim()
        )
    }
}

/// Axis-aligned conditioning subset over the conditioning coordinates.
#[pyclass(name = "Box", frozen)]
#[derive(Clone)]
struct PyBox {
    inner: CondBox,
}

#[pymethods]
impl PyBox {
    /// Interval box over one coordinate, unbounded elsewhere.
    #[staticmethod]
    #[pyo3(signature = (dim, coord, lower = None, upper = None, lower_open = false, upper_open = false))]
    fn interval(
        dim: usize,
        coord: usize,
        lower: Option<f64>,
        upper: Option<f64>,
        lower_open: bool,
        upper_open: bool,
    ) -> PyBox {
        PyBox {
            inner: CondBox::interval(
                dim,
                coord,
                lower.unwrap_or(f64::NEG_INFINITY),
                upper.unwrap_or(f64::INFINITY),
                lower_open,
                upper_open,
            ),
        }
    }

    /// Code-set box over one categorical coordinate.
    #[staticmethod]
    fn codes(dim: usize, coord: usize, codes: Vec<i64>) -> PyBox {
        PyBox {
            inner: CondBox::codes(dim, coord, codes),
        }
    }

    /// The whole conditioning space.
    #[staticmethod]
    fn full(dim: usize) -> PyBox {
        PyBox {
            inner: CondBox::full(dim),
        }
    }

    fn contains(&self, point: Vec<f64>) -> bool {
        self.inner.contains(&point)
    }

    fn __repr__(&self) -> String {
        let names: Vec<String> = (0..self.inner.dim()).map(|j| format!("x{}", j + 1)).collect();
        format!("Box({})", self.inner.describe(&names))
    }
}

/// Ordered family of conditioning boxes.
#[pyclass(name = "BoxFamily", frozen)]
#[derive(Clone)]
struct PyBoxFamily {
    inner: boxtau::BoxFamily,
}

#[pymethods]
impl PyBoxFamily {
    #[new]
    #[pyo3(signature = (boxes, disjoint = false))]
    fn new(boxes: Vec<PyBox>, disjoint: bool) -> PyBoxFamily {
        PyBoxFamily {
            inner: boxtau::BoxFamily::new(boxes.into_iter().map(|b| b.inner).collect(), disjoint),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn disjoint(&self) -> bool {
        self.inner.disjoint
    }

    fn boxes(&self) -> Vec<PyBox> {
        self.inner.boxes.iter().map(|b| PyBox { inner: b.clone() }).collect()
    }
}

/// Dependence tree grown by the recursive split search.
#[pyclass(name = "Tree", frozen)]
struct PyTree {
    inner: boxtau::DependenceTree,
}

#[pymethods]
impl PyTree {
    fn leaves(&self) -> PyBoxFamily {
        PyBoxFamily {
            inner: self.inner.leaves(),
        }
    }

    fn leaf_count(&self) -> usize {
        self.inner.leaves().m()
    }

    fn depth(&self) -> usize {
        self.inner.depth()
    }

    fn is_binary_search_in_tau(&self) -> bool {
        boxtau::is_binary_search_in_tau(&self.inner)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_dot(&self) -> String {
        self.inner.to_dot()
    }

    /// Per-pair tau vector of the root node.
    fn root_taus(&self) -> Vec<f64> {
        self.inner.root.taus.clone()
    }
}

fn parse_variant(variant: &str) -> PyResult<TauVariant> {
    match variant {
        "1" | "v1" => Ok(TauVariant::V1),
        "2" | "v2" => Ok(TauVariant::V2),
        "3" | "v3" => Ok(TauVariant::V3),
        "rescaled" => Ok(TauVariant::Rescaled),
        other => Err(PyValueError::new_err(format!("unknown variant '{other}'"))),
    }
}

fn result_dict<'py>(py: Python<'py>, res: &TestResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("method", res.method.name())?;
    d.set_item("statistic", res.statistic)?;
    d.set_item("df", res.df)?;
    d.set_item("p_value", res.p_value)?;
    d.set_item("m", res.m)?;
    d.set_item("p", res.p)?;
    d.set_item("n", res.n)?;
    d.set_item("b", res.b)?;
    d.set_item("seed", res.seed)?;
    Ok(d)
}

/// Rescaled conditional Kendall's tau for every (pair, box) cell, plus the
/// box occupancy data.
#[pyfunction]
fn tau_matrix<'py>(
    py: Python<'py>,
    sample: &PySample,
    family: &PyBoxFamily,
) -> PyResult<Bound<'py, PyDict>> {
    let est = boxtau::tau_matrix(&sample.inner, &family.inner).into_py()?;
    let d = PyDict::new(py);
    let m = est.m;
    let taus: Vec<Vec<f64>> = (0..est.pair_count())
        .map(|pi| (0..m).map(|k| est.tau(pi, k)).collect())
        .collect();
    d.set_item("taus", taus)?;
    d.set_item(
        "pairs",
        est.pairs.iter().map(|pr| (pr.a, pr.b)).collect::<Vec<_>>(),
    )?;
    d.set_item("counts", est.counts.clone())?;
    d.set_item("p_hat", est.p_hat.clone())?;
    Ok(d)
}

/// One conditional Kendall's tau; variant is "rescaled" (default), "1", "2"
/// or "3".
#[pyfunction]
#[pyo3(signature = (sample, a, b, cond_box, variant = "rescaled"))]
fn tau_pair_box(
    sample: &PySample,
    a: usize,
    b: usize,
    cond_box: &PyBox,
    variant: &str,
) -> PyResult<f64> {
    if a >= b {
        return Err(PyValueError::new_err("pair needs a < b"));
    }
    boxtau::tau_pair_box(
        &sample.inner,
        PairIndex::new(a, b),
        &cond_box.inner,
        parse_variant(variant)?,
    )
    .into_py()
}

/// Row indices whose conditioning coordinates lie in the box.
#[pyfunction]
fn members(sample: &PySample, cond_box: &PyBox) -> Vec<usize> {
    boxtau::members(&sample.inner, &cond_box.inner)
}

/// Wald chi-squared test of tau equality across the family.
#[pyfunction]
#[pyo3(signature = (sample, family, ridge = false))]
fn wald_test<'py>(
    py: Python<'py>,
    sample: &PySample,
    family: &PyBoxFamily,
    ridge: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let tau = boxtau::tau_matrix(&sample.inner, &family.inner).into_py()?;
    let delta = boxtau::delta_hat(&sample.inner, &family.inner).into_py()?;
    let contrast =
        boxtau::extended_contrast(family.inner.m(), sample.inner.conditioned_dim()).into_py()?;
    let res = boxtau::wald_statistic_opts(&tau, &delta, &contrast, ridge).into_py()?;
    result_dict(py, &res)
}

/// Bootstrap test; statistic is "inf" or "l2", scheme "classical" or
/// "conditional".
#[pyfunction]
#[pyo3(signature = (sample, family, statistic = "inf", scheme = "classical", b = 1000, seed = 0, smoothed = false))]
#[allow(clippy::too_many_arguments)]
fn bootstrap_test<'py>(
    py: Python<'py>,
    sample: &PySample,
    family: &PyBoxFamily,
    statistic: &str,
    scheme: &str,
    b: usize,
    seed: u64,
    smoothed: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let stat = match statistic {
        "inf" => StatKind::Inf,
        "l2" => StatKind::L2,
        other => return Err(PyValueError::new_err(format!("unknown statistic '{other}'"))),
    };
    let scheme = match scheme {
        "classical" => Scheme::Classical,
        "conditional" => Scheme::Conditional,
        other => return Err(PyValueError::new_err(format!("unknown scheme '{other}'"))),
    };
    let mut config = BootstrapConfig::new(scheme, b, seed);
    config.smoothed_pvalue = smoothed;
    let res = core_bootstrap_test(&sample.inner, &family.inner, stat, &config).into_py()?;
    result_dict(py, &res)
}

/// Grows the dependence tree on the full sample.
#[pyfunction]
#[pyo3(signature = (sample, min_cut = 0.4, min_size = 0.05, alpha = 0.0, max_depth = 6))]
fn build_tree(
    sample: &PySample,
    min_cut: f64,
    min_size: f64,
    alpha: f64,
    max_depth: usize,
) -> PyResult<PyTree> {
    let config = TreeConfig {
        min_cut,
        min_size,
        alpha,
        max_depth,
        ..TreeConfig::default()
    };
    Ok(PyTree {
        inner: boxtau::cut_ckt(&sample.inner, &config).into_py()?,
    })
}

/// P(chi^2_df > x).
#[pyfunction]
fn chisq_survival(x: f64, df: usize) -> PyResult<f64> {
    boxtau::chisq_survival(x, df).into_py()
}

/// Standard normal quantile, u in (0, 1).
#[pyfunction]
fn normal_quantile(u: f64) -> PyResult<f64> {
    boxtau::normal_quantile(u).into_py()
}

#[pymodule]
fn boxtau_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySample>()?;
    m.add_class::<PyBox>()?;
    m.add_class::<PyBoxFamily>()?;
    m.add_class::<PyTree>()?;
    m.add_function(wrap_pyfunction!(tau_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(tau_pair_box, m)?)?;
    m.add_function(wrap_pyfunction!(members, m)?)?;
    m.add_function(wrap_pyfunction!(wald_test, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_test, m)?)?;
    m.add_function(wrap_pyfunction!(build_tree, m)?)?;
    m.add_function(wrap_pyfunction!(chisq_survival, m)?)?;
    m.add_function(wrap_pyfunction!(normal_quantile, m)?)?;
    Ok(())
}
