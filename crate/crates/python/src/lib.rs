//! Python bindings for the qmpo solver.
//!
//! Matrices cross the boundary as row-major lists of lists of floats.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;

use qmpo::baselines::{gpi_solve, BaselineConfig};
use qmpo::driver::{solve as lanczos_solve, QmpoProblem, SolveReport, SolverConfig};
use qmpo::linalg::{CsrMatrix, Mat, SymmetricOperator};
use qmpo::mtx::{read_matrix_market, MmMatrix};
use qmpo::problems::gen_synthetic;
use qmpo::report::{history_csv, to_json};
use qmpo::rtr::RtrConfig;
use qmpo::verify::{
    certificate_csv, certify as certify_problem, CertifyConfig, ConvergenceCertificate, Verdict,
};

create_exception!(qmpo_py, QmpoError, PyException, "Solver error.");
create_exception!(
    qmpo_py,
    DegenerateInputError,
    QmpoError,
    "Degenerate problem data, such as G = 0."
);

fn to_py(e: qmpo::QmpoError) -> PyErr {
    match e {
        qmpo::QmpoError::Io(io) => PyOSError::new_err(io.to_string()),
        e if e.is_degenerate_input() => DegenerateInputError::new_err(e.to_string()),
        qmpo::QmpoError::Config(_)
        | qmpo::QmpoError::Dimension(_)
        | qmpo::QmpoError::Asymmetric(_) => PyValueError::new_err(e.to_string()),
        e => QmpoError::new_err(e.to_string()),
    }
}

fn mat_from_rows(rows: &[Vec<f64>], what: &str) -> PyResult<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(PyValueError::new_err(format!("{what} is empty")));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!(
            "{what}: row {i} has {} entries, expected {ncols}",
            rows[i].len()
        )));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn read_operator(path: PathBuf) -> PyResult<SymmetricOperator> {
    match read_matrix_market(&path).map_err(to_py)? {
        MmMatrix::Sparse(a) => SymmetricOperator::sparse(a),
        MmMatrix::Dense(a) => SymmetricOperator::dense(a),
    }
    .map_err(to_py)
}

/// An instance of min tr(UᵀHU) + 2 tr(UᵀG) subject to UᵀU = I.
#[pyclass(frozen, module = "qmpo_py")]
struct Problem {
    inner: QmpoProblem,
}

#[pymethods]
impl Problem {
    /// Dense symmetric H.
    #[staticmethod]
    fn dense(h: Vec<Vec<f64>>, g: Vec<Vec<f64>>) -> PyResult<Self> {
        let h = SymmetricOperator::dense(mat_from_rows(&h, "H")?).map_err(to_py)?;
        Self::build(h, &g)
    }

    /// Sparse symmetric H from `(row, col, value)` triplets; both triangles
    /// must be given.
    #[staticmethod]
    fn sparse(n: usize, triplets: Vec<(usize, usize, f64)>, g: Vec<Vec<f64>>) -> PyResult<Self> {
        let a = CsrMatrix::from_triplets(n, n, &triplets).map_err(to_py)?;
        Self::build(SymmetricOperator::sparse(a).map_err(to_py)?, &g)
    }

    /// H = AᵀA, applied without forming H.
    #[staticmethod]
    fn gram(a: Vec<Vec<f64>>, g: Vec<Vec<f64>>) -> PyResult<Self> {
        Self::build(SymmetricOperator::gram(mat_from_rows(&a, "A")?), &g)
    }

    /// Reads H (or the factor A with H = AᵀA) and G from Matrix Market files.
    #[staticmethod]
    #[pyo3(signature = (g, h = None, gram = None))]
    fn from_files(g: PathBuf, h: Option<PathBuf>, gram: Option<PathBuf>) -> PyResult<Self> {
        let op = match (h, gram) {
            (Some(h), None) => read_operator(h)?,
            (None, Some(a)) => {
                SymmetricOperator::gram(read_matrix_market(&a).map_err(to_py)?.to_dense())
            }
            _ => return Err(PyValueError::new_err("pass exactly one of h and gram")),
        };
        let g = read_matrix_market(&g).map_err(to_py)?.to_dense();
        Ok(Self {
            inner: QmpoProblem::new(op, g).map_err(to_py)?,
        })
    }

    /// Random sparse H with entries in [-1, 1] and dense G, reproducible
    /// from the seed.
    #[staticmethod]
    #[pyo3(signature = (n, l, density = 0.01, seed = 0))]
    fn synthetic(n: usize, l: usize, density: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: gen_synthetic(n, l, density, seed).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn l(&self) -> usize {
        self.inner.l()
    }

    #[getter]
    fn name(&self) -> Option<String> {
        self.inner.name.clone()
    }

    fn objective(&self, u: Vec<Vec<f64>>) -> PyResult<f64> {
        self.inner
            .objective(&mat_from_rows(&u, "U")?)
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Problem(n={}, l={})", self.inner.n(), self.inner.l())
    }
}

impl Problem {
    fn build(h: SymmetricOperator, g: &[Vec<f64>]) -> PyResult<Self> {
        Ok(Self {
            inner: QmpoProblem::new(h, mat_from_rows(g, "G")?).map_err(to_py)?,
        })
    }
}

/// Outcome of a solver run. `objective` and `kkt` are in the units of the
/// original problem; the JSON keeps the scaled values and the scale.
#[pyclass(frozen, module = "qmpo_py")]
struct Report {
    inner: SolveReport,
}

#[pymethods]
impl Report {
    #[getter]
    fn solver(&self) -> &str {
        &self.inner.solver
    }

    #[getter]
    fn u(&self) -> Vec<Vec<f64>> {
        mat_to_rows(&self.inner.u)
    }

    /// Multiplier of the scaled problem.
    #[getter]
    fn lambda_(&self) -> Vec<Vec<f64>> {
        mat_to_rows(&self.inner.lambda)
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective_unscaled()
    }

    #[getter]
    fn kkt(&self) -> f64 {
        self.inner.kkt_unscaled()
    }

    #[getter]
    fn scale(&self) -> f64 {
        self.inner.scale
    }

    #[getter]
    fn termination(&self) -> &'static str {
        self.inner.termination.as_str()
    }

    #[getter]
    fn lanczos_steps(&self) -> usize {
        self.inner.lanczos_steps
    }

    #[getter]
    fn wall_ms(&self) -> f64 {
        self.inner.wall_ms
    }

    /// `(k, f, kkt, du)` per checkpoint, scaled.
    #[getter]
    fn history(&self) -> Vec<(usize, f64, f64, Option<f64>)> {
        self.inner
            .history
            .iter()
            .map(|c| (c.k, c.f, c.kkt, c.du))
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner).map_err(to_py)
    }

    fn history_csv(&self) -> String {
        history_csv(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(solver={:?}, objective={:.6e}, kkt={:.3e}, termination={:?})",
            self.inner.solver,
            self.inner.objective_unscaled(),
            self.inner.kkt_unscaled(),
            self.inner.termination.as_str()
        )
    }
}

#[pyclass(frozen, module = "qmpo_py")]
struct Certificate {
    inner: ConvergenceCertificate,
}

#[pymethods]
impl Certificate {
    #[getter]
    fn oracle(&self) -> &str {
        &self.inner.oracle
    }

    #[getter]
    fn passed(&self) -> usize {
        self.inner.count(Verdict::Pass)
    }

    #[getter]
    fn failed(&self) -> usize {
        self.inner.count(Verdict::Fail)
    }

    #[getter]
    fn skipped(&self) -> usize {
        self.inner.count(Verdict::Skipped)
    }

    /// `(k, check, measured, bound)` for every failing check.
    fn failures(&self) -> Vec<(usize, String, Option<f64>, Option<f64>)> {
        self.inner
            .failures()
            .map(|f| (f.k, f.check.clone(), f.measured, f.bound))
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner).map_err(to_py)
    }

    fn to_csv(&self) -> String {
        certificate_csv(&self.inner)
    }
}

/// Block Lanczos solve.
#[pyfunction]
#[pyo3(signature = (
    problem, *, eps_f = 1e-10, eps_u = 1e-6, eps_g = 1e-5, k_max = 1000, solve_every = 5,
    restarts = 1, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    problem: &Problem,
    eps_f: f64,
    eps_u: f64,
    eps_g: f64,
    k_max: usize,
    solve_every: usize,
    restarts: usize,
    seed: u64,
) -> PyResult<Report> {
    let cfg = SolverConfig {
        eps_f,
        eps_u,
        eps_g,
        k_max,
        solve_every,
        rtr: RtrConfig {
            restarts,
            ..RtrConfig::default()
        },
        seed,
        ..SolverConfig::default()
    };
    let inner = py
        .detach(|| lanczos_solve(&problem.inner, &cfg))
        .map_err(to_py)?;
    Ok(Report { inner })
}

/// Generalized power iteration baseline.
#[pyfunction]
#[pyo3(signature = (problem, *, max_iters = 1000, tol = 1e-10, seed = 0))]
fn gpi(
    py: Python<'_>,
    problem: &Problem,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> PyResult<Report> {
    let cfg = BaselineConfig {
        max_iters,
        tol,
        seed,
        ..BaselineConfig::default()
    };
    let inner = py
        .detach(|| gpi_solve(&problem.inner, &cfg))
        .map_err(to_py)?;
    Ok(Report { inner })
}

/// Checks the convergence envelopes of a traced Lanczos run against a
/// dense oracle. Meant for small n.
#[pyfunction]
#[pyo3(signature = (problem, *, restarts = 5))]
fn certify(py: Python<'_>, problem: &Problem, restarts: usize) -> PyResult<Certificate> {
    let cfg = CertifyConfig {
        restarts,
        ..CertifyConfig::default()
    };
    let inner = py
        .detach(|| certify_problem(&problem.inner, &cfg))
        .map_err(to_py)?;
    Ok(Certificate { inner })
}

#[pymodule]
fn qmpo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<Report>()?;
    m.add_class::<Certificate>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(gpi, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add("QmpoError", m.py().get_type::<QmpoError>())?;
    m.add(
        "DegenerateInputError",
        m.py().get_type::<DegenerateInputError>(),
    )?;
    Ok(())
}
