//! Python bindings: models, samples, statistics sources and the learning stages.

use std::path::PathBuf;

use mixgraph::empirical::StatsSource;
use mixgraph::eval::{align_components, diagnostics as run_diagnostics, DiagnosticsConfig};
use mixgraph::graphs::Graph;
use mixgraph::model::{build_mixture, sample, Family, GeneratorConfig, DEFAULT_ENUMERATION_CAP};
use mixgraph::pipeline::{self, FindOptions};
use mixgraph::ranktest::{self, choose_threshold, RankTestConfig, ThresholdPolicy};
use mixgraph::spectral::random_rotation;
use mixgraph::Error;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidConfig(_) | Error::Parse(_) | Error::OutOfRange(_) | Error::Json(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Serialize to JSON and parse it with Python's `json` module.
fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn graph_from(p: usize, edges: Vec<(usize, usize)>) -> PyResult<Graph> {
    Graph::from_edges(p, edges).map_err(to_py)
}

#[pyclass(name = "MixtureModel", module = "pymixgraph", frozen)]
struct PyMixtureModel {
    inner: mixgraph::model::MixtureModel,
}

#[pymethods]
impl PyMixtureModel {
    /// Random certified mixture; `family` is `tree`, `bounded_degree` or `product`.
    #[staticmethod]
    #[pyo3(signature = (p, d, r, family = "tree", seed = 0, eta = None, max_degree = 3, strength = (-1.0, 1.0), require_witnesses = true))]
    #[allow(clippy::too_many_arguments)]
    fn generate(
        py: Python<'_>,
        p: usize,
        d: usize,
        r: usize,
        family: &str,
        seed: u64,
        eta: Option<usize>,
        max_degree: usize,
        strength: (f64, f64),
        require_witnesses: bool,
    ) -> PyResult<Self> {
        let family: Family = family.parse().map_err(to_py)?;
        let mut cfg = GeneratorConfig::new(p, d, r, family, seed);
        cfg.eta = eta;
        cfg.max_degree = max_degree;
        cfg.potential_strength = strength;
        cfg.require_witnesses = require_witnesses;
        let inner = py.detach(|| build_mixture(&cfg)).map_err(to_py)?;
        Ok(PyMixtureModel { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyMixtureModel {
            inner: mixgraph::model::MixtureModel::from_json(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyMixtureModel {
            inner: mixgraph::model::MixtureModel::load(&path).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.alphabet_size()
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.num_components()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn isolated_node(&self) -> usize {
        self.inner.isolated_node()
    }

    fn union_edges(&self) -> Vec<(usize, usize)> {
        self.inner.union_graph().edges()
    }

    fn component_edges(&self, h: usize) -> PyResult<Vec<(usize, usize)>> {
        self.inner
            .components()
            .get(h)
            .map(|c| c.graph().edges())
            .ok_or_else(|| PyValueError::new_err(format!("component {h} out of range")))
    }

    /// `n` i.i.d. draws with their hidden labels.
    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, py: Python<'_>, n: usize, seed: u64) -> PyResult<PySamples> {
        let inner = py.detach(|| sample(&self.inner, n, seed, DEFAULT_ENUMERATION_CAP)).map_err(to_py)?;
        Ok(PySamples { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "MixtureModel(p={}, d={}, r={}, union_edges={})",
            self.inner.num_nodes(),
            self.inner.alphabet_size(),
            self.inner.num_components(),
            self.inner.union_graph().num_edges()
        )
    }
}

#[pyclass(name = "Samples", module = "pymixgraph", frozen)]
struct PySamples {
    inner: mixgraph::model::SampleSet,
}

#[pymethods]
impl PySamples {
    #[staticmethod]
    #[pyo3(signature = (rows, p, d, seed = 0))]
    fn from_rows(rows: Vec<Vec<usize>>, p: usize, d: usize, seed: u64) -> PyResult<Self> {
        Ok(PySamples {
            inner: mixgraph::model::SampleSet::new(p, d, seed, rows).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PySamples {
            inner: mixgraph::model::SampleSet::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    fn rows(&self) -> Vec<Vec<u16>> {
        self.inner.rows().map(|r| r.to_vec()).collect()
    }

    fn labels(&self) -> Option<Vec<usize>> {
        self.inner.labels().map(|l| l.to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Statistics source: exact oracle of a model, or empirical counts of samples.
#[pyclass(name = "Stats", module = "pymixgraph", frozen)]
struct PyStats {
    inner: StatsSource,
}

#[pymethods]
impl PyStats {
    #[staticmethod]
    #[pyo3(signature = (model, cap = DEFAULT_ENUMERATION_CAP))]
    fn exact(py: Python<'_>, model: &PyMixtureModel, cap: usize) -> PyResult<Self> {
        let inner = py.detach(|| StatsSource::exact(&model.inner, cap)).map_err(to_py)?;
        Ok(PyStats { inner })
    }

    #[staticmethod]
    fn empirical(samples: &PySamples) -> PyResult<Self> {
        Ok(PyStats {
            inner: StatsSource::empirical(samples.inner.clone()).map_err(to_py)?,
        })
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn is_exact(&self) -> bool {
        self.inner.is_exact()
    }

    /// Joint probability matrix `P(Y_u, Y_v, Y_S = k)` as nested rows.
    fn prob_matrix(&self, u: usize, v: usize, s: Vec<usize>, k: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
        let m = self.inner.prob_matrix(u, v, &s, &k).map_err(to_py)?;
        let data = m.data();
        Ok((0..data.nrows()).map(|i| data.row(i).iter().copied().collect()).collect())
    }
}

#[pyclass(name = "GraphEstimate", module = "pymixgraph", frozen)]
struct PyGraphEstimate {
    inner: ranktest::GraphEstimate,
}

#[pymethods]
impl PyGraphEstimate {
    #[getter]
    fn p(&self) -> usize {
        self.inner.graph.num_nodes()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.graph.edges()
    }

    #[getter]
    fn xi(&self) -> f64 {
        self.inner.xi
    }

    #[getter]
    fn svd_calls(&self) -> u64 {
        self.inner.svd_calls
    }

    fn isolated_nodes(&self) -> Vec<usize> {
        self.inner.graph.isolated_nodes()
    }

    /// Separator certifying that `(u, v)` is a non-edge, if any.
    fn certificate(&self, u: usize, v: usize) -> Option<Vec<usize>> {
        self.inner.certificate(u, v).map(|c| c.separator.clone())
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner)
    }
}

#[pyclass(name = "ComponentEstimate", module = "pymixgraph", frozen)]
struct PyComponentEstimate {
    inner: pipeline::ComponentEstimate,
}

#[pymethods]
impl PyComponentEstimate {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyComponentEstimate { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.num_components()
    }

    fn tree(&self, h: usize) -> PyResult<Vec<(usize, usize)>> {
        self.inner
            .trees
            .get(h)
            .map(|t| t.edges.clone())
            .ok_or_else(|| PyValueError::new_err(format!("component {h} out of range")))
    }

    /// `P̂(Y_a, Y_b | H=h)` as nested rows, or `None` when the pair was not estimated.
    fn marginal(&self, a: usize, b: usize, h: usize) -> PyResult<Option<Vec<Vec<f64>>>> {
        if h >= self.inner.num_components() {
            return Err(PyValueError::new_err(format!("component {h} out of range")));
        }
        Ok(self.inner.marginal(a, b).map(|m| {
            if a <= b {
                m.tables[h].clone()
            } else {
                let t = &m.tables[h];
                (0..t.len()).map(|j| t.iter().map(|row| row[j]).collect()).collect()
            }
        }))
    }

    fn missing_pairs(&self) -> Vec<(usize, usize)> {
        self.inner.missing_pairs.iter().map(|m| (m.a, m.b)).collect()
    }

    #[getter]
    fn alignment_consistent(&self) -> bool {
        self.inner.alignment.consistent
    }

    fn permuted(&self, perm: Vec<usize>) -> PyResult<Self> {
        Ok(PyComponentEstimate {
            inner: self.inner.permuted(&perm).map_err(to_py)?,
        })
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner)
    }
}

/// Threshold from `policy`: `"gap"`, `"fixed"` (needs `xi`) or `"oracle"` (needs `rho_min`).
fn threshold(
    stats: &PyStats,
    policy: &str,
    xi: Option<f64>,
    rho_min: Option<f64>,
    zeta: f64,
    eta: usize,
    r: usize,
) -> PyResult<f64> {
    let policy = match (policy, xi, rho_min) {
        ("fixed", Some(xi), _) => ThresholdPolicy::Fixed { xi },
        ("oracle", _, Some(rho_min)) => ThresholdPolicy::Oracle { rho_min, zeta },
        ("gap", _, _) => ThresholdPolicy::Gap,
        _ => return Err(PyValueError::new_err(format!("bad threshold policy `{policy}` or missing value"))),
    };
    choose_threshold(&policy, Some(&stats.inner), eta, r).map_err(to_py)
}

/// Union-graph estimate by rank tests. Passing `xi` selects the fixed policy.
#[pyfunction]
#[pyo3(signature = (stats, eta, r, xi = None, policy = None, rho_min = None, zeta = 0.0))]
#[allow(clippy::too_many_arguments)]
fn rank_test(
    py: Python<'_>,
    stats: &PyStats,
    eta: usize,
    r: usize,
    xi: Option<f64>,
    policy: Option<&str>,
    rho_min: Option<f64>,
    zeta: f64,
) -> PyResult<PyGraphEstimate> {
    let policy = policy.unwrap_or(if xi.is_some() { "fixed" } else { "gap" });
    let xi = threshold(stats, policy, xi, rho_min, zeta, eta, r)?;
    let mut cfg = RankTestConfig::new(eta, r, xi);
    cfg.zeta = zeta;
    let inner = py.detach(|| ranktest::rank_test(&stats.inner, &cfg)).map_err(to_py)?;
    Ok(PyGraphEstimate { inner })
}

/// Component marginals, weights and Chow-Liu trees given a graph estimate.
#[pyfunction]
#[pyo3(signature = (stats, graph, r, eta, rotation_seed = 0, tree_fast_path = false, gamma = None))]
#[allow(clippy::too_many_arguments)]
fn find_components(
    py: Python<'_>,
    stats: &PyStats,
    graph: &PyGraphEstimate,
    r: usize,
    eta: usize,
    rotation_seed: u64,
    tree_fast_path: bool,
    gamma: Option<usize>,
) -> PyResult<PyComponentEstimate> {
    let mut opts = FindOptions::new(eta);
    opts.tree_fast_path = tree_fast_path;
    opts.gamma = gamma;
    let z = random_rotation(r, rotation_seed);
    let inner = py
        .detach(|| pipeline::find_components(&stats.inner, &graph.inner.graph, r, &z, &opts))
        .map_err(to_py)?;
    Ok(PyComponentEstimate { inner })
}

/// Per-component graphs as edge lists, obtained by pruning the graph estimate.
#[pyfunction]
#[pyo3(signature = (estimate, stats, graph, eta, threshold, cap = DEFAULT_ENUMERATION_CAP))]
fn component_graphs(
    py: Python<'_>,
    estimate: &PyComponentEstimate,
    stats: &PyStats,
    graph: &PyGraphEstimate,
    eta: usize,
    threshold: f64,
    cap: usize,
) -> PyResult<Vec<Vec<(usize, usize)>>> {
    let opts = FindOptions::new(eta);
    let graphs = py
        .detach(|| pipeline::estimate_component_graphs(&estimate.inner, &stats.inner, &graph.inner.graph, threshold, &opts, cap))
        .map_err(to_py)?;
    Ok(graphs.iter().map(Graph::edges).collect())
}

/// Aligned comparison of an estimate against the true model, as a dict.
#[pyfunction]
#[pyo3(signature = (estimate, model, graph = None))]
fn evaluate<'py>(
    py: Python<'py>,
    estimate: &PyComponentEstimate,
    model: &PyMixtureModel,
    graph: Option<&PyGraphEstimate>,
) -> PyResult<Bound<'py, PyAny>> {
    let report = py
        .detach(|| align_components(&estimate.inner, &model.inner, graph.map(|g| &g.inner.graph), DEFAULT_ENUMERATION_CAP))
        .map_err(to_py)?;
    to_dict(py, &report)
}

/// Assumption quantities of a model, as a dict.
#[pyfunction]
#[pyo3(signature = (model, eta = None, gamma = None, zeta = 0.0, delta = 0.05, epsilon = 0.1))]
fn diagnostics<'py>(
    py: Python<'py>,
    model: &PyMixtureModel,
    eta: Option<usize>,
    gamma: Option<usize>,
    zeta: f64,
    delta: f64,
    epsilon: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = DiagnosticsConfig {
        eta,
        gamma,
        zeta,
        delta,
        epsilon,
        enumeration_cap: DEFAULT_ENUMERATION_CAP,
    };
    let report = py.detach(|| run_diagnostics(&model.inner, &cfg)).map_err(to_py)?;
    to_dict(py, &report)
}

/// Edges of the union of the given edge lists over `p` nodes.
#[pyfunction]
fn union_graph(p: usize, graphs: Vec<Vec<(usize, usize)>>) -> PyResult<Vec<(usize, usize)>> {
    let graphs = graphs.into_iter().map(|e| graph_from(p, e)).collect::<PyResult<Vec<_>>>()?;
    Ok(mixgraph::graphs::union_graph(&graphs).map_err(to_py)?.edges())
}

/// `(pairs, separator_sets, svd_calls_upper_bound)` for the rank test.
#[pyfunction]
fn test_budget(p: usize, eta: usize, d: usize) -> (u128, u128, u128) {
    let b = ranktest::test_budget(p, eta, d);
    (b.pairs, b.separator_sets, b.svd_calls_upper_bound)
}

#[pymodule]
fn pymixgraph(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyMixtureModel>()?;
    m.add_class::<PySamples>()?;
    m.add_class::<PyStats>()?;
    m.add_class::<PyGraphEstimate>()?;
    m.add_class::<PyComponentEstimate>()?;
    m.add_function(wrap_pyfunction!(rank_test, m)?)?;
    m.add_function(wrap_pyfunction!(find_components, m)?)?;
    m.add_function(wrap_pyfunction!(component_graphs, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(diagnostics, m)?)?;
    m.add_function(wrap_pyfunction!(union_graph, m)?)?;
    m.add_function(wrap_pyfunction!(test_budget, m)?)?;
    Ok(())
}
