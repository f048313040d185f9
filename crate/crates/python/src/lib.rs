//! Python bindings for the `dtm` solver.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use dtm::evs::{validate_partition, PlanFile};
use dtm::graph::graph_from_system;
use dtm::matrix::direct_solve;
use dtm::nalgebra::DMatrix;
use dtm::sim::{ConvergenceCriterion, SimConfig};
use dtm::{assemble_all, demo, experiment, spectral};

fn err(e: dtm::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Row-major list of lists to a square matrix.
fn dense(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(DMatrix::from_row_slice(n, n, &rows.concat()))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[pyclass(name = "SymmetricSystem", module = "pydtm")]
struct PySystem {
    inner: dtm::SymmetricSystem,
}

#[pymethods]
impl PySystem {
    #[staticmethod]
    fn from_dense(a: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<Self> {
        dtm::SymmetricSystem::from_dense(&dense(&a)?, b).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn load(matrix: &str, rhs: &str) -> PyResult<Self> {
        dtm::io::load_system(matrix.as_ref(), rhs.as_ref()).map(|inner| Self { inner }).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn rhs(&self) -> Vec<f64> {
        self.inner.rhs().to_vec()
    }

    fn to_dense(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.to_dense())
    }

    /// Direct solution by partial-pivot elimination.
    fn solve(&self) -> PyResult<Vec<f64>> {
        direct_solve(&self.inner.to_dense(), self.inner.rhs()).map_err(err)
    }

    fn relative_residual(&self, x: Vec<f64>) -> f64 {
        self.inner.relative_residual(&x)
    }

    fn __repr__(&self) -> String {
        format!("SymmetricSystem(dim={}, nnz_upper={})", self.inner.dim(), self.inner.nnz_upper())
    }
}

#[pyclass(name = "DtlpSpec", module = "pydtm", from_py_object)]
#[derive(Clone)]
struct PyDtlp {
    inner: dtm::DtlpSpec,
}

#[pymethods]
impl PyDtlp {
    #[new]
    fn new(z: f64, tau_fwd: f64, tau_bwd: f64) -> PyResult<Self> {
        dtm::DtlpSpec::new(z, tau_fwd, tau_bwd).map(|inner| Self { inner }).map_err(err)
    }

    #[getter]
    fn z(&self) -> f64 {
        self.inner.z
    }

    #[getter]
    fn tau_fwd(&self) -> f64 {
        self.inner.tau_fwd
    }

    #[getter]
    fn tau_bwd(&self) -> f64 {
        self.inner.tau_bwd
    }

    fn __repr__(&self) -> String {
        format!("DtlpSpec(z={}, tau_fwd={}, tau_bwd={})", self.inner.z, self.inner.tau_fwd, self.inner.tau_bwd)
    }
}

fn specs(dtlps: &[PyDtlp]) -> Vec<dtm::DtlpSpec> {
    dtlps.iter().map(|d| d.inner).collect()
}

#[pyclass(name = "Partition", module = "pydtm")]
struct PyPartition {
    inner: dtm::Partition,
    graph: dtm::ElectricGraph,
}

#[pymethods]
impl PyPartition {
    /// Applies a plan given as text (ASSIGN, B, BE lines and SPLIT sections).
    #[staticmethod]
    fn from_plan(system: &PySystem, plan: &str) -> PyResult<Self> {
        let graph = graph_from_system(&system.inner);
        let inner = PlanFile::read_text(plan.as_bytes())
            .and_then(|pf| pf.apply(&graph))
            .map_err(err)?;
        Ok(Self { inner, graph })
    }

    #[getter]
    fn num_subgraphs(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn num_pairs(&self) -> usize {
        self.inner.twin_pairs().len()
    }

    /// Vertex labels of subgraph `j`, e.g. `["1", "2a", "3a"]`.
    fn vertices(&self, j: usize) -> PyResult<Vec<String>> {
        if j >= self.inner.len() {
            return Err(PyValueError::new_err(format!("no subgraph {j}")));
        }
        Ok(self.inner.subgraph(j).vertices().iter().map(|v| v.id.to_string()).collect())
    }

    /// `(reassembly_ok, convergence_hypothesis_ok, classes)`.
    fn validate(&self) -> PyResult<(bool, bool, Vec<String>)> {
        let r = validate_partition(&self.inner, &self.graph).map_err(err)?;
        Ok((r.reassembly_ok, r.convergence_hypothesis_ok, r.classes.iter().map(|c| c.to_string()).collect()))
    }

    /// Reduced local matrices in each subgraph's vertex order.
    fn reduced_matrices(&self, dtlps: Vec<PyDtlp>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let systems = assemble_all(&self.inner, &specs(&dtlps)).map_err(err)?;
        Ok(systems.iter().map(|ls| to_rows(&ls.reduced_in_vertex_order())).collect())
    }

    fn to_text(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_text(&mut buf).map_err(err)?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }
}

#[pyclass(name = "Trace", module = "pydtm")]
struct PyTrace {
    inner: dtm::Trace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn converged_at(&self) -> Option<f64> {
        self.inner.converged_at
    }

    #[getter]
    fn event_count(&self) -> usize {
        self.inner.event_count
    }

    #[getter]
    fn initial_rms(&self) -> f64 {
        self.inner.initial_rms
    }

    #[getter]
    fn final_rms(&self) -> f64 {
        self.inner.final_rms()
    }

    /// Assembled potentials in original order.
    #[getter]
    fn final_x(&self) -> Vec<f64> {
        self.inner.final_x.clone()
    }

    fn times(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.time).collect()
    }

    fn rms_residuals(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.rms_residual).collect()
    }

    fn rms_at(&self, t: f64) -> f64 {
        self.inner.rms_at(t)
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(err)?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }

    fn summary(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_summary(&mut buf).map_err(err)?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }

    fn __len__(&self) -> usize {
        self.inner.samples.len()
    }
}

fn sim_config(dtlps: &[PyDtlp], t_max: f64, tol: f64, compute_delay: f64, subgraphs: usize) -> SimConfig {
    let mut cfg = SimConfig::new(specs(dtlps), t_max);
    cfg.convergence = ConvergenceCriterion::residual(tol);
    if compute_delay > 0.0 {
        cfg.compute_delay = vec![compute_delay; subgraphs];
    }
    cfg
}

#[pyfunction]
#[pyo3(signature = (partition, dtlps, t_max, tol = 1e-8, compute_delay = 0.0))]
fn run_async(partition: &PyPartition, dtlps: Vec<PyDtlp>, t_max: f64, tol: f64, compute_delay: f64) -> PyResult<PyTrace> {
    let cfg = sim_config(&dtlps, t_max, tol, compute_delay, partition.inner.len());
    dtm::run_async(&partition.inner, &cfg).map(|inner| PyTrace { inner }).map_err(err)
}

/// Synchronous sweeps; only the impedances of `dtlps` are used.
#[pyfunction]
#[pyo3(signature = (partition, dtlps, k_max, tol = 1e-8))]
fn run_vtm(partition: &PyPartition, dtlps: Vec<PyDtlp>, k_max: usize, tol: f64) -> PyResult<PyTrace> {
    let cfg = sim_config(&dtlps, k_max as f64, tol, 0.0, partition.inner.len());
    dtm::run_vtm(&partition.inner, &cfg, k_max).map(|inner| PyTrace { inner }).map_err(err)
}

#[pyfunction]
fn za_eigen(a: Vec<Vec<f64>>, z: Vec<f64>) -> PyResult<Vec<f64>> {
    spectral::za_eigen(&dense(&a)?, &z).map_err(err)
}

#[pyfunction]
fn lambda_bounds(t: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    spectral::lambda_bounds(&t).map_err(err)
}

#[pyfunction]
fn gen_random_spd(n: usize, density: f64, seed: u64) -> PyResult<PySystem> {
    experiment::gen_random_spd(n, density, seed).map(|inner| PySystem { inner }).map_err(err)
}

/// `(name, passed, detail)` per check.
#[pyfunction]
#[pyo3(signature = (seed = 1, cases = 20))]
fn verify_suite(seed: u64, cases: usize) -> PyResult<Vec<(String, bool, String)>> {
    let checks = experiment::verify_suite(seed, cases).map_err(err)?;
    Ok(checks.into_iter().map(|c| (c.name, c.passed, c.detail)).collect())
}

/// The four-unknown worked system, its plan text and line pairs.
#[pyfunction]
fn worked_example() -> PyResult<(PySystem, PyPartition, Vec<PyDtlp>)> {
    let system = demo::four_vertex_system();
    let graph = graph_from_system(&system);
    let inner = dtm::apply_split(&graph, &demo::four_vertex_plan()).map_err(err)?;
    let dtlps = demo::two_processor_dtlps().into_iter().map(|inner| PyDtlp { inner }).collect();
    Ok((PySystem { inner: system }, PyPartition { inner, graph }, dtlps))
}

#[pymodule]
fn pydtm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PyDtlp>()?;
    m.add_class::<PyPartition>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(run_async, m)?)?;
    m.add_function(wrap_pyfunction!(run_vtm, m)?)?;
    m.add_function(wrap_pyfunction!(za_eigen, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(gen_random_spd, m)?)?;
    m.add_function(wrap_pyfunction!(verify_suite, m)?)?;
    m.add_function(wrap_pyfunction!(worked_example, m)?)?;
    Ok(())
}
