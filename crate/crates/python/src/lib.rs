//! Python bindings: networks, masks, pruning, reachability and the GCN.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tcprune_core::gcn::model::{GcnHyper, GcnMask, GcnModel};
use tcprune_core::gcn::prune::{gcn_consistency, prune_gcn};
use tcprune_core::gcn::skeleton::{temporal_chunking, ChunkedGraphSignal, SkeletonSequence};
use tcprune_core::pruner::{self, PruneSpec, Scoring};
use tcprune_core::surrogate::build_table;
use tcprune_core::{textfmt, topology, Activation, BoolMatrix, DenseMatrix, Error};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn dense(rows: Vec<Vec<f64>>) -> PyResult<DenseMatrix> {
    DenseMatrix::from_rows(&rows).map_err(to_py)
}

fn dense_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn bool_rows(m: &BoolMatrix) -> Vec<Vec<bool>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn scoring(name: &str, alpha: f64) -> PyResult<Scoring> {
    match name {
        "local" => Ok(Scoring::Local),
        "global" => Ok(Scoring::Global { alpha }),
        other => Err(PyValueError::new_err(format!("unknown scoring `{other}`"))),
    }
}

/// Layered network with weights `W^l` of shape `d_{l-1} x d_l`.
#[pyclass(name = "Network", module = "tcprune", from_py_object)]
#[derive(Clone)]
struct PyNetwork {
    inner: tcprune_core::LayeredNetwork,
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (weights, activations=None))]
    fn new(weights: Vec<Vec<Vec<f64>>>, activations: Option<Vec<String>>) -> PyResult<Self> {
        let blocks = weights.into_iter().map(dense).collect::<PyResult<Vec<_>>>()?;
        let inner = match activations {
            Some(names) => {
                let acts = names
                    .iter()
                    .map(|n| Activation::parse(n).ok_or_else(|| PyValueError::new_err(format!("unknown activation `{n}`"))))
                    .collect::<PyResult<Vec<_>>>()?;
                tcprune_core::LayeredNetwork::new(blocks, acts)
            }
            None => tcprune_core::LayeredNetwork::with_activations(blocks, Activation::Relu, Activation::Identity),
        }
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: textfmt::network_from_str(text).map_err(to_py)?,
        })
    }

    fn to_text(&self) -> String {
        textfmt::network_to_string(&self.inner)
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims().to_vec()
    }

    fn weights(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.weights().iter().map(dense_rows).collect()
    }

    fn total_connections(&self) -> usize {
        self.inner.total_connections()
    }

    fn budget(&self, rate: f64) -> PyResult<usize> {
        Ok(self.inner.budget(rate).map_err(to_py)?.max_kept)
    }

    fn forward(&self, input: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.forward(&input).map_err(to_py)
    }

    fn masked_forward(&self, mask: &PyMask, input: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.masked_forward(&mask.inner, &input).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Network(dims={:?})", self.inner.dims())
    }
}

/// Keep/drop bits per connection, one boolean matrix per layer.
#[pyclass(name = "Mask", module = "tcprune", from_py_object)]
#[derive(Clone)]
struct PyMask {
    inner: tcprune_core::MaskTensor,
}

#[pymethods]
impl PyMask {
    #[new]
    fn new(layers: Vec<Vec<Vec<bool>>>) -> PyResult<Self> {
        let masks = layers
            .into_iter()
            .map(|rows| {
                let r = rows.len();
                let c = rows.first().map_or(0, Vec::len);
                BoolMatrix::new(r, c, rows.into_iter().flatten().collect())
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(to_py)?;
        Ok(Self {
            inner: tcprune_core::MaskTensor::new(masks).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: textfmt::mask_from_str(text).map_err(to_py)?,
        })
    }

    fn to_text(&self) -> String {
        textfmt::mask_to_string(&self.inner)
    }

    fn layers(&self) -> Vec<Vec<Vec<bool>>> {
        self.inner.masks().iter().map(bool_rows).collect()
    }

    fn kept_count(&self) -> usize {
        self.inner.kept_count()
    }

    fn __repr__(&self) -> String {
        format!("Mask(dims={:?}, kept={})", self.inner.dims(), self.inner.kept_count())
    }
}

#[pyfunction]
fn standard_mp(net: &PyNetwork, rate: f64) -> PyResult<PyMask> {
    Ok(PyMask {
        inner: pruner::standard_mp(&net.inner, rate).map_err(to_py)?,
    })
}

#[pyfunction]
#[pyo3(signature = (net, rate, seed=0))]
fn stochastic_mp(net: &PyNetwork, rate: f64, seed: u64) -> PyResult<PyMask> {
    Ok(PyMask {
        inner: pruner::stochastic_mp(&net.inner, rate, seed).map_err(to_py)?,
    })
}

#[pyfunction]
#[pyo3(signature = (net, rate, stochastic=false, scoring="local", alpha=1.0, seed=0))]
fn tc_mp(net: &PyNetwork, rate: f64, stochastic: bool, scoring: &str, alpha: f64, seed: u64) -> PyResult<PyMask> {
    let spec = PruneSpec::tc(rate, stochastic, self::scoring(scoring, alpha)?, seed);
    Ok(PyMask {
        inner: pruner::tc_mp(&net.inner, &spec).map_err(to_py)?,
    })
}

/// `{"kept", "consistent", "ac_percent"}`; `ac_percent` is `None` for an empty mask.
#[pyfunction]
fn consistency_report<'py>(py: Python<'py>, mask: &PyMask) -> PyResult<Bound<'py, PyDict>> {
    let s = topology::consistency_report(&mask.inner).summary();
    let d = PyDict::new(py);
    d.set_item("kept", s.kept)?;
    d.set_item("consistent", s.consistent)?;
    d.set_item("ac_percent", s.ac_percent)?;
    Ok(d)
}

#[pyfunction]
fn trim_to_consistent(mask: &PyMask) -> PyMask {
    PyMask {
        inner: topology::trim_to_consistent(&mask.inner),
    }
}

/// Accessible / co-accessible flags of connection `(l, i, j)`, `l` 1-based.
#[pyfunction]
fn connection_flags(mask: &PyMask, l: usize, i: usize, j: usize) -> PyResult<(bool, bool)> {
    topology::connection_flags(&mask.inner, l, i, j).map_err(to_py)
}

/// Surrogate matrices `Ŵ^{l+1}` for `l = 1..L`.
#[pyfunction]
fn surrogate_table(net: &PyNetwork, alpha: f64) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let table = build_table(&net.inner, alpha).map_err(to_py)?;
    Ok((1..=net.inner.depth()).map(|l| dense_rows(&table.matrix(l))).collect())
}

#[pyfunction]
fn budget(total_connections: usize, rate: f64) -> PyResult<usize> {
    Ok(tcprune_core::PruningBudget::new(total_connections, rate).map_err(to_py)?.max_kept)
}

/// `U` (3M x J) from J joint trajectories of `(x, y, z)` points.
#[pyfunction]
fn chunk_sequence(joints: Vec<Vec<[f64; 3]>>, chunks: usize) -> PyResult<Vec<Vec<f64>>> {
    let seq = SkeletonSequence { label: 0, joints };
    Ok(dense_rows(&temporal_chunking(&seq, chunks).map_err(to_py)?.u))
}

/// Multi-head GCN over graph signals of shape `signal x nodes`.
#[pyclass(name = "GcnModel", module = "tcprune", from_py_object)]
#[derive(Clone)]
struct PyGcn {
    inner: GcnModel,
}

#[pymethods]
impl PyGcn {
    #[new]
    #[pyo3(signature = (heads, filters, nodes, signal, classes, seed=0))]
    fn new(heads: usize, filters: usize, nodes: usize, signal: usize, classes: usize, seed: u64) -> PyResult<Self> {
        let hyper = GcnHyper {
            heads,
            filters,
            nodes,
            signal,
            classes,
        };
        Ok(Self {
            inner: GcnModel::init(hyper, None, seed).map_err(to_py)?,
        })
    }

    fn param_count(&self) -> usize {
        self.inner.hyper().param_count()
    }

    fn forward(&self, u: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.forward(&ChunkedGraphSignal { u: dense(u)? }).map_err(to_py)
    }

    /// The exact layered view that pruning operates on.
    fn as_layered(&self) -> PyNetwork {
        PyNetwork {
            inner: self.inner.as_layered().0,
        }
    }

    /// Parameter-level mask as a flat list in parameter order, plus its consistency summary.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (rate, tc=true, stochastic=false, scoring="local", alpha=1.0, seed=0))]
    fn prune<'py>(
        &self,
        py: Python<'py>,
        rate: f64,
        tc: bool,
        stochastic: bool,
        scoring: &str,
        alpha: f64,
        seed: u64,
    ) -> PyResult<(Vec<bool>, Bound<'py, PyDict>)> {
        let spec = PruneSpec {
            rate,
            tc,
            stochastic,
            scoring: self::scoring(scoring, alpha)?,
            seed,
        };
        let mask: GcnMask = prune_gcn(&self.inner, &spec).map_err(to_py)?;
        let s = gcn_consistency(&mask);
        let d = PyDict::new(py);
        d.set_item("kept", s.kept)?;
        d.set_item("consistent", s.consistent)?;
        d.set_item("ac_percent", s.ac_percent)?;
        Ok((mask.to_flat(), d))
    }
}

#[pymodule]
fn tcprune(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyMask>()?;
    m.add_class::<PyGcn>()?;
    m.add_function(wrap_pyfunction!(standard_mp, m)?)?;
    m.add_function(wrap_pyfunction!(stochastic_mp, m)?)?;
    m.add_function(wrap_pyfunction!(tc_mp, m)?)?;
    m.add_function(wrap_pyfunction!(consistency_report, m)?)?;
    m.add_function(wrap_pyfunction!(trim_to_consistent, m)?)?;
    m.add_function(wrap_pyfunction!(connection_flags, m)?)?;
    m.add_function(wrap_pyfunction!(surrogate_table, m)?)?;
    m.add_function(wrap_pyfunction!(budget, m)?)?;
    m.add_function(wrap_pyfunction!(chunk_sequence, m)?)?;
    Ok(())
}
