//! Python bindings. Vertex ids are 1-based, as on the CLI and HTTP API.

use mlbn_core::gmm::{estimate_gmm, min_estimator, EmOptions, GmmOptions, DEFAULT_WEIGHT_FLOOR};
use mlbn_core::network::{atom_set, edge_occupancy, Edge, WeightedDag};
use mlbn_core::qp::{auto_tune, default_schedule, default_threshold, solve_pair_1d};
use mlbn_core::simulate::{simulate_with_feed, DifferenceSample, InnovationSpec, NoiseFeed, NoiseSpec, SampleSet};
use mlbn_core::tropical::{kleene_star, TropicalMatrix};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

fn err(e: mlbn_core::Error) -> PyErr {
    match e {
        mlbn_core::Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn vertex(v: usize, n: usize) -> PyResult<usize> {
    if v == 0 || v > n {
        return Err(PyValueError::new_err(format!("vertex {v} out of range 1..={n}")));
    }
    Ok(v - 1)
}

fn value_to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any().unbind(),
            (None, Some(f)) => f.into_pyobject(py)?.into_any().unbind(),
            _ => py.None(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(a) => {
            let items = a.iter().map(|x| value_to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any().unbind()
        }
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, value_to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

fn to_py<T: Serialize>(py: Python<'_>, x: &T) -> PyResult<Py<PyAny>> {
    let v = serde_json::to_value(x).map_err(|e| PyValueError::new_err(e.to_string()))?;
    value_to_py(py, &v)
}

/// Weighted DAG with log-scale edge weights.
#[pyclass(name = "Graph", module = "mlbn", frozen)]
struct PyGraph {
    inner: WeightedDag,
}

#[pymethods]
impl PyGraph {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        let edges = edges
            .into_iter()
            .map(|(s, t, w)| Ok(Edge { source: vertex(s, n)?, target: vertex(t, n)?, weight: w }))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(PyGraph { inner: WeightedDag::new(n, edges).map_err(err)? })
    }

    /// One of `gmm`, `ten-node`, `ten-node-tuning`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        mlbn_core::presets::by_name(name)
            .map(|inner| PyGraph { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown preset {name:?}")))
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(PyGraph { inner: WeightedDag::from_json(s).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner.edges().iter().map(|e| (e.source + 1, e.target + 1, e.weight)).collect()
    }

    fn graph_hash(&self) -> String {
        self.inner.graph_hash()
    }

    /// Longest-path weights; unreachable pairs are `-inf`.
    fn kleene_star(&self) -> Vec<Vec<f64>> {
        self.inner.kleene_star().closure().to_f64_rows()
    }

    fn ancestors(&self, v: usize) -> PyResult<Vec<usize>> {
        let v = vertex(v, self.inner.n())?;
        Ok(self.inner.ancestors(v).map_err(err)?.into_iter().map(|a| a + 1).collect())
    }

    fn atoms(&self, py: Python<'_>, i: usize, j: usize) -> PyResult<Py<PyAny>> {
        let n = self.inner.n();
        let set = atom_set(&self.inner, &self.inner.kleene_star(), vertex(i, n)?, vertex(j, n)?).map_err(err)?;
        to_py(py, &set)
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={})", self.inner.n(), self.inner.edges().len())
    }
}

/// Log-scale samples, one row per observation.
#[pyclass(name = "Samples", module = "mlbn", frozen)]
struct PySamples {
    inner: SampleSet,
}

impl PySamples {
    fn diff(&self, i: usize, j: usize) -> PyResult<DifferenceSample> {
        let n = self.inner.n_vertices();
        self.inner.differences(vertex(i, n)?, vertex(j, n)?).map_err(err)
    }
}

#[pymethods]
impl PySamples {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PySamples { inner: SampleSet::load(path).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn n_vertices(&self) -> usize {
        self.inner.n_vertices()
    }

    fn log_x(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    /// `log X_j - log X_i` per row.
    fn differences(&self, i: usize, j: usize) -> PyResult<Vec<f64>> {
        Ok(self.diff(i, j)?.values)
    }

    /// Fraction of rows in which each edge attains its child's maximum.
    fn occupancy(&self, py: Python<'_>, graph: &PyGraph) -> PyResult<Py<PyAny>> {
        to_py(py, &edge_occupancy(&graph.inner, &self.inner).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("Samples(n_samples={}, n_vertices={})", self.inner.n_samples(), self.inner.n_vertices())
    }
}

#[pyfunction]
#[pyo3(signature = (graph, n, seed=0, sigma=0.1, sigmas=None, alpha=0.0, beta=1.0, xi=1.0, feed="measurement"))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    graph: &PyGraph,
    n: usize,
    seed: u64,
    sigma: f64,
    sigmas: Option<Vec<f64>>,
    alpha: f64,
    beta: f64,
    xi: f64,
    feed: &str,
) -> PyResult<PySamples> {
    let feed = match feed {
        "measurement" => NoiseFeed::Measurement,
        "propagated" => NoiseFeed::Propagated,
        _ => return Err(PyValueError::new_err(format!("unknown feed {feed:?}"))),
    };
    let noise = match sigmas {
        Some(s) => NoiseSpec { sigmas: s },
        None => NoiseSpec::uniform(graph.inner.n(), sigma),
    };
    let inn = InnovationSpec { alpha, beta, xi };
    let dag = &graph.inner;
    let inner = py.detach(|| simulate_with_feed(dag, &inn, &noise, n, seed, feed)).map_err(err)?;
    Ok(PySamples { inner })
}

/// Kleene star of a square max-plus matrix given as rows; `-inf` marks a missing edge.
#[pyfunction]
fn kleene(rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = TropicalMatrix::from_f64_rows(&rows).map_err(err)?;
    Ok(kleene_star(&m).map_err(err)?.closure().to_f64_rows())
}

#[pyfunction]
fn min_estimate(py: Python<'_>, samples: &PySamples, i: usize, j: usize) -> PyResult<Py<PyAny>> {
    to_py(py, &min_estimator(&samples.diff(i, j)?).map_err(err)?)
}

/// Returns `{"report": ..., "fit": ...}`.
#[pyfunction]
#[pyo3(signature = (samples, i, j, graph=None, kmax=None, seed=0, floor=DEFAULT_WEIGHT_FLOOR))]
fn gmm_estimate(
    py: Python<'_>,
    samples: &PySamples,
    i: usize,
    j: usize,
    graph: Option<&PyGraph>,
    kmax: Option<usize>,
    seed: u64,
    floor: f64,
) -> PyResult<Py<PyAny>> {
    let y = samples.diff(i, j)?;
    let opts = GmmOptions { k_max: kmax, weight_floor: floor, em: EmOptions { seed, ..EmOptions::default() } };
    let dag = graph.map(|g| &g.inner);
    let (report, fit) = py.detach(|| estimate_gmm(&y, dag, &opts)).map_err(err)?;
    to_py(py, &serde_json::json!({ "report": report, "fit": fit }))
}

#[pyfunction]
fn qp_solve(py: Python<'_>, samples: &PySamples, i: usize, j: usize, k1: f64, k2: f64) -> PyResult<Py<PyAny>> {
    let sol = solve_pair_1d(&samples.diff(i, j)?, k1, k2).map_err(err)?;
    to_py(py, &sol)
}

/// Runs the default `(K1, K2)` schedule until `ω'` drops below `t`.
#[pyfunction]
#[pyo3(signature = (samples, i, j, t=None))]
fn qp_auto(py: Python<'_>, samples: &PySamples, i: usize, j: usize, t: Option<f64>) -> PyResult<Py<PyAny>> {
    let y = samples.diff(i, j)?;
    let t = t.unwrap_or_else(|| default_threshold(&y));
    to_py(py, &auto_tune(&y, t, &default_schedule()).map_err(err)?)
}

#[pymodule]
fn mlbn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PySamples>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(kleene, m)?)?;
    m.add_function(wrap_pyfunction!(min_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(gmm_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(qp_solve, m)?)?;
    m.add_function(wrap_pyfunction!(qp_auto, m)?)?;
    Ok(())
}
