//! Python bindings: tensors, ICL evaluation, greedy fitting, simulation and
//! contact-log ingest.

use std::fs::File;
use std::io::BufReader;

use nssbm::greedy::MoveKind;
use nssbm::ingest::{parse_contact_log as parse_log, BinningSpec};
use nssbm::simulate::{additive_rates, GenerativeSpec, RateGrid};
use nssbm::{EventRecord, Mode, Partition};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(err: nssbm::Error) -> PyErr {
    match err {
        nssbm::Error::Io(e) => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    mode.parse()
        .map_err(|e: nssbm::Error| PyValueError::new_err(e.to_string()))
}

#[pyclass(name = "Hyperparameters", module = "nssbm_py", from_py_object)]
#[derive(Clone, Copy)]
struct PyHyperparameters {
    inner: nssbm::Hyperparameters,
}

#[pymethods]
impl PyHyperparameters {
    #[new]
    #[pyo3(signature = (a=1.0, b=1.0, alpha=1.0, gamma=1.0, delta=1.0))]
    fn new(a: f64, b: f64, alpha: f64, gamma: f64, delta: f64) -> PyResult<Self> {
        let inner = nssbm::Hyperparameters {
            a,
            b,
            alpha,
            gamma,
            delta,
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }
    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    fn __repr__(&self) -> String {
        let h = &self.inner;
        format!(
            "Hyperparameters(a={}, b={}, alpha={}, gamma={}, delta={})",
            h.a, h.b, h.alpha, h.gamma, h.delta
        )
    }
}

fn hyper(h: Option<PyHyperparameters>) -> nssbm::Hyperparameters {
    h.map(|h| h.inner).unwrap_or_default()
}

/// Sparse count tensor over (node, node, bin).
#[pyclass(name = "InteractionTensor", module = "nssbm_py", skip_from_py_object)]
struct PyTensor {
    inner: nssbm::InteractionTensor,
}

#[pymethods]
impl PyTensor {
    /// `records` is a list of `(source, target, bin, count)` tuples.
    #[new]
    #[pyo3(signature = (records, num_nodes, num_bins, mode="directed"))]
    fn new(records: Vec<(usize, usize, usize, u64)>, num_nodes: usize, num_bins: usize, mode: &str) -> PyResult<Self> {
        let recs: Vec<EventRecord> = records
            .into_iter()
            .map(|(i, j, u, n)| EventRecord::new(i, j, u, n))
            .collect();
        let inner = nssbm::build_tensor(&recs, num_nodes, num_bins, parse_mode(mode)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }
    #[getter]
    fn num_bins(&self) -> usize {
        self.inner.num_bins()
    }
    #[getter]
    fn mode(&self) -> String {
        self.inner.mode().to_string()
    }
    #[getter]
    fn total_count(&self) -> u64 {
        self.inner.total_count()
    }
    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    fn get(&self, source: usize, target: usize, bin: usize) -> u64 {
        self.inner.get(source, target, bin)
    }

    fn records(&self) -> Vec<(usize, usize, usize, u64)> {
        self.inner
            .entries()
            .iter()
            .map(|e| (e.source, e.target, e.bin, e.count))
            .collect()
    }

    fn bin_totals(&self) -> Vec<u64> {
        self.inner.bin_totals()
    }

    fn __repr__(&self) -> String {
        format!(
            "InteractionTensor(num_nodes={}, num_bins={}, mode={}, total_count={})",
            self.inner.num_nodes(),
            self.inner.num_bins(),
            self.inner.mode(),
            self.inner.total_count()
        )
    }
}

#[pyclass(name = "FitResult", module = "nssbm_py", skip_from_py_object)]
struct PyFitResult {
    inner: nssbm::FitResult,
    h: nssbm::Hyperparameters,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }
    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }
    #[getter]
    fn icl(&self) -> f64 {
        self.inner.icl.total
    }
    #[getter]
    fn node_labels(&self) -> Vec<usize> {
        self.inner.node_partition.labels().to_vec()
    }
    #[getter]
    fn time_labels(&self) -> Vec<usize> {
        self.inner.time_partition.labels().to_vec()
    }
    #[getter]
    fn restart_id(&self) -> usize {
        self.inner.restart_id
    }
    #[getter]
    fn sweeps(&self) -> usize {
        self.inner.sweeps
    }

    /// Posterior mean rates as nested `[k][g][d]` lists.
    #[getter]
    fn rates(&self) -> Vec<Vec<Vec<f64>>> {
        let r = &self.inner.rates;
        let (nk, nd) = (r.num_node_clusters(), r.num_time_clusters());
        (0..nk)
            .map(|k| (0..nk).map(|g| (0..nd).map(|d| r.get(k, g, d)).collect()).collect())
            .collect()
    }

    /// Accepted steps as `(sweep, kind, delta, icl_after)`.
    #[getter]
    fn trace(&self) -> Vec<(usize, &'static str, f64, f64)> {
        self.inner
            .trace
            .iter()
            .map(|s| {
                let kind = match s.kind {
                    MoveKind::NodeMove => "node_move",
                    MoveKind::TimeMove => "time_move",
                    MoveKind::NodeMerge => "node_merge",
                    MoveKind::TimeMerge => "time_merge",
                };
                (s.sweep, kind, s.delta, s.icl_after)
            })
            .collect()
    }

    fn time_cluster_intensity(&self) -> Vec<f64> {
        self.inner.time_cluster_intensity(&self.h)
    }

    fn __repr__(&self) -> String {
        format!(
            "FitResult(k={}, d={}, icl={:.6})",
            self.inner.k, self.inner.d, self.inner.icl.total
        )
    }
}

/// ICL of the given labelling as a dict with `total`, `emission` and `labels`.
#[pyfunction]
#[pyo3(signature = (tensor, node_labels, time_labels, hyperparameters=None))]
fn icl<'py>(
    py: Python<'py>,
    tensor: &PyTensor,
    node_labels: Vec<usize>,
    time_labels: Vec<usize>,
    hyperparameters: Option<PyHyperparameters>,
) -> PyResult<Bound<'py, PyDict>> {
    let c = Partition::compact(&node_labels).map_err(to_py)?;
    let y = Partition::compact(&time_labels).map_err(to_py)?;
    let v = nssbm::icl(&tensor.inner, &c, &y, &hyper(hyperparameters)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("total", v.total)?;
    out.set_item("emission", v.emission_term)?;
    out.set_item("labels", v.label_term)?;
    Ok(out)
}

/// Best-of-restarts greedy ICL search. Releases the GIL while running.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (tensor, k_max=10, d_max=10, num_restarts=5, max_sweeps=100, seed=0, hyperparameters=None))]
fn greedy_fit(
    py: Python<'_>,
    tensor: &PyTensor,
    k_max: usize,
    d_max: usize,
    num_restarts: usize,
    max_sweeps: usize,
    seed: u64,
    hyperparameters: Option<PyHyperparameters>,
) -> PyResult<PyFitResult> {
    let h = hyper(hyperparameters);
    let cfg = nssbm::SearchConfig {
        k_max: k_max.min(tensor.inner.num_nodes()),
        d_max: d_max.min(tensor.inner.num_bins()),
        num_restarts,
        max_sweeps,
        seed,
        ..Default::default()
    };
    let t = &tensor.inner;
    let inner = py.detach(|| nssbm::greedy_fit(t, &h, &cfg)).map_err(to_py)?;
    Ok(PyFitResult { inner, h })
}

/// Draws labels and counts from additive rates `s1[k] + s2[g] + s3[d]`.
/// Returns `(tensor, node_labels, time_labels)`.
#[pyfunction]
#[pyo3(signature = (num_nodes, num_bins, s1, s2, s3, seed=0, mode="directed", delta=1.0, node_weights=None, time_weights=None))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    num_nodes: usize,
    num_bins: usize,
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
    seed: u64,
    mode: &str,
    delta: f64,
    node_weights: Option<Vec<f64>>,
    time_weights: Option<Vec<f64>>,
) -> PyResult<(PyTensor, Vec<usize>, Vec<usize>)> {
    let rates: RateGrid = additive_rates(&s1, &s2, &s3).map_err(to_py)?;
    let base = GenerativeSpec::uniform(num_nodes, num_bins, rates, seed);
    let spec = GenerativeSpec {
        node_weights: node_weights.unwrap_or(base.node_weights.clone()),
        time_weights: time_weights.unwrap_or(base.time_weights.clone()),
        delta,
        mode: parse_mode(mode)?,
        ..base
    };
    let sim = nssbm::simulate::simulate(&spec).map_err(to_py)?;
    Ok((PyTensor { inner: sim.tensor }, sim.node_labels, sim.time_labels))
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    nssbm::metrics::adjusted_rand_index(&a, &b).map_err(to_py)
}

/// Reads a `t i j` contact log and bins it into an undirected tensor.
/// Returns `(tensor, raw_ids)` where `raw_ids[dense] = raw`.
#[pyfunction]
#[pyo3(signature = (path, bin_width=900, origin=0, num_bins=96))]
fn parse_contact_log(path: &str, bin_width: i64, origin: i64, num_bins: usize) -> PyResult<(PyTensor, Vec<u64>)> {
    let file = File::open(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
    let log = parse_log(BufReader::new(file)).map_err(to_py)?;
    let spec = BinningSpec {
        origin,
        bin_width,
        num_bins,
        drop_out_of_range: true,
    };
    let inner = log.to_tensor(&spec).map_err(to_py)?;
    Ok((PyTensor { inner }, log.node_map.raw_ids().to_vec()))
}

#[pymodule]
fn nssbm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHyperparameters>()?;
    m.add_class::<PyTensor>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(icl, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_fit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(parse_contact_log, m)?)?;
    Ok(())
}
