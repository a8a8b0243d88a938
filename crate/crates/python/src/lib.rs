//! Python bindings: matrices, panels, simulation, recovery and cross-validation.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use dynrec::designs::{read_triplets, write_triplets};
use dynrec::estimators::{cross_validate_refined, recover_with_traces, CvPlan, EstimatorKind};
use dynrec::evalharness::experiment::{choose_bandwidth, choose_lambda};
use dynrec::evalharness::{mse_t, run_experiment, BandwidthMode, ExperimentConfig, LambdaMode, Scenario};
use dynrec::kernelband::kernel_constants;
use dynrec::synthgen::{build_panel, n_from_rho, DependentDesignSpec, GroundTruthPath, NoiseSpec};
use dynrec::{matcore, DesignFamily, DesignKind, Error, KernelKind, Mat, Panel, SolverConfig};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> PyResult<T> {
    s.parse().map_err(|_| PyValueError::new_err(format!("unknown {what} {s:?}")))
}

/// Dense row-major matrix.
#[pyclass(name = "Mat", module = "dynrec_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMat(Mat);

#[pymethods]
impl PyMat {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(PyValueError::new_err("rows must all have the same length"));
        }
        Mat::from_vec(r, c, rows.into_iter().flatten().collect()).map(PyMat).map_err(py_err)
    }

    #[staticmethod]
    fn zeros(rows: usize, cols: usize) -> Self {
        PyMat(Mat::zeros(rows, cols))
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.0.dims()
    }

    fn tolist(&self) -> Vec<Vec<f64>> {
        (0..self.0.rows()).map(|r| self.0.row(r).to_vec()).collect()
    }

    fn __getitem__(&self, idx: (usize, usize)) -> PyResult<f64> {
        let (r, c) = idx;
        if r >= self.0.rows() || c >= self.0.cols() {
            return Err(PyValueError::new_err(format!("index {idx:?} out of range for {:?}", self.0.dims())));
        }
        Ok(self.0[(r, c)])
    }

    fn frob_norm(&self) -> f64 {
        matcore::frob_norm(&self.0)
    }

    fn nuclear_norm(&self) -> PyResult<f64> {
        matcore::nuclear_norm(&self.0).map_err(py_err)
    }

    fn spectral_norm(&self) -> PyResult<f64> {
        matcore::spectral_norm(&self.0).map_err(py_err)
    }

    fn rank(&self) -> PyResult<usize> {
        matcore::numerical_rank(&self.0).map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        matcore::write_dmr1(path, &self.0).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        matcore::read_dmr1(path).map(PyMat).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Mat({}x{})", self.0.rows(), self.0.cols())
    }
}

/// Observations grouped by time point.
#[pyclass(name = "Panel", module = "dynrec_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPanel(Panel);

#[pymethods]
impl PyPanel {
    #[getter]
    fn dims(&self) -> (usize, usize) {
        self.0.dims
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.0.horizon()
    }

    #[getter]
    fn family(&self) -> String {
        self.0.family.kind.to_string()
    }

    fn batch_sizes(&self) -> Vec<usize> {
        self.0.batch_sizes()
    }

    fn total_observations(&self) -> usize {
        self.0.total_observations()
    }

    fn write_triplets(&self, path: &str) -> PyResult<()> {
        write_triplets(path, &self.0).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (path, dims=None, horizon=None))]
    fn read_triplets(path: &str, dims: Option<(usize, usize)>, horizon: Option<usize>) -> PyResult<Self> {
        read_triplets(path, dims, horizon).map(PyPanel).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Panel({}, {}x{}, T={}, n={})",
            self.0.family.kind,
            self.0.dims.0,
            self.0.dims.1,
            self.0.horizon(),
            self.0.total_observations()
        )
    }
}

fn wrap(ms: Vec<Mat>) -> Vec<PyMat> {
    ms.into_iter().map(PyMat).collect()
}

/// Singular value soft-thresholding at `tau`.
#[pyfunction]
fn svt(m: PyRef<'_, PyMat>, tau: f64) -> PyResult<PyMat> {
    matcore::svt(&m.0, tau).map(PyMat).map_err(py_err)
}

/// Simulates a panel around the smooth rotating path; returns `(panel, truths)`.
#[pyfunction]
#[pyo3(signature = (m1=120, m2=80, rank=5, horizon=50, rho=0.2, family="completion", sigma_x=1.0, sigma=1.0, beta=0.0, alpha=0.0, truth_seed=1, seed=1))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    m1: usize,
    m2: usize,
    rank: usize,
    horizon: usize,
    rho: f64,
    family: &str,
    sigma_x: f64,
    sigma: f64,
    beta: f64,
    alpha: f64,
    truth_seed: u64,
    seed: u64,
) -> PyResult<(PyPanel, Vec<PyMat>)> {
    let kind: DesignKind = parse("design family", family)?;
    let path = GroundTruthPath::new(m1, m2, rank, horizon, truth_seed).map_err(py_err)?;
    let fam = DesignFamily::new(kind, m1, m2, sigma_x);
    let noise = if beta > 0.0 {
        NoiseSpec::PhiMixingAr { sigma, beta }
    } else {
        NoiseSpec::Iid { sigma }
    };
    let dep = DependentDesignSpec { alpha };
    let (panel, truths) = build_panel(&path, &fam, n_from_rho(rho, (m1, m2)), &noise, (alpha > 0.0).then_some(&dep), seed)
        .map_err(py_err)?;
    Ok((PyPanel(panel), wrap(truths)))
}

/// Plug-in bandwidth for `panel`.
#[pyfunction]
#[pyo3(signature = (panel, c_h=0.2, rank_guess=5))]
fn plug_in_bandwidth(panel: PyRef<'_, PyPanel>, c_h: f64, rank_guess: usize) -> PyResult<f64> {
    choose_bandwidth(BandwidthMode::Auto { c_h }, &panel.0, rank_guess).map_err(py_err)
}

/// Recovers the matrix path. `lambda_=None` selects λ by cross-validation and
/// `h=None` uses the plug-in bandwidth. Returns `(estimates, h, lambda, iterations)`.
#[pyfunction]
#[pyo3(signature = (panel, estimator="dlr", lambda_=None, h=None, kernel="epanechnikov", c_h=0.2, rank_guess=5, max_iters=500, tol=1e-3, seed=1))]
#[allow(clippy::too_many_arguments)]
fn recover(
    py: Python<'_>,
    panel: PyRef<'_, PyPanel>,
    estimator: &str,
    lambda_: Option<f64>,
    h: Option<f64>,
    kernel: &str,
    c_h: f64,
    rank_guess: usize,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> PyResult<(Vec<PyMat>, f64, f64, usize)> {
    let kind: EstimatorKind = parse("estimator", estimator)?;
    let kernel: KernelKind = parse("kernel", kernel)?;
    let panel = panel.0.clone();
    let (estimates, h, lambda, iters) = py
        .detach(|| -> dynrec::Result<_> {
            let mode = match h {
                Some(h) => BandwidthMode::Fixed { h },
                None => BandwidthMode::Auto { c_h },
            };
            let h = choose_bandwidth(mode, &panel, rank_guess)?;
            let mut shell = ExperimentConfig::new(Scenario::RealData);
            shell.kernel = kernel;
            shell.max_iters = max_iters;
            shell.tol = tol;
            shell.lambda = match lambda_ {
                Some(value) => LambdaMode::Fixed { value },
                None => LambdaMode::default(),
            };
            let lambda = choose_lambda(&shell, &panel, kind, h, seed)?;
            let rec = recover_with_traces(&panel, kind, h, kernel, &shell.solver(lambda))?;
            let iters = rec.total_iters();
            Ok((rec.estimates, h, lambda, iters))
        })
        .map_err(py_err)?;
    Ok((wrap(estimates), h, lambda, iters))
}

/// K-fold cross-validation over `grid`; returns `(lambda_star, [(lambda, score)])`.
#[pyfunction]
#[pyo3(signature = (panel, grid, h, estimator="dlr", kernel="epanechnikov", folds=5, fine_points=0, seed=1))]
#[allow(clippy::too_many_arguments)]
fn cross_validate(
    py: Python<'_>,
    panel: PyRef<'_, PyPanel>,
    grid: Vec<f64>,
    h: f64,
    estimator: &str,
    kernel: &str,
    folds: usize,
    fine_points: usize,
    seed: u64,
) -> PyResult<(f64, Vec<(f64, f64)>)> {
    let kind: EstimatorKind = parse("estimator", estimator)?;
    let kernel: KernelKind = parse("kernel", kernel)?;
    let panel = panel.0.clone();
    let plan = CvPlan {
        folds,
        lambda_grid: grid,
        split_seed: seed,
    };
    let report = py
        .detach(|| cross_validate_refined(&panel, kind, h, kernel, &plan, &SolverConfig::default(), fine_points))
        .map_err(py_err)?;
    Ok((report.lambda_star, report.scores))
}

/// Per-time mean squared error between two equal-length matrix lists.
#[pyfunction]
fn mse(estimates: Vec<PyRef<'_, PyMat>>, truths: Vec<PyRef<'_, PyMat>>) -> PyResult<Vec<f64>> {
    if estimates.len() != truths.len() {
        return Err(PyValueError::new_err(format!("{} estimates vs {} truths", estimates.len(), truths.len())));
    }
    estimates.iter().zip(&truths).map(|(e, t)| mse_t(&e.0, &t.0).map_err(py_err)).collect()
}

/// `(alpha(K), R(K))` for a kernel name.
#[pyfunction]
fn kernel_moments(kernel: &str) -> PyResult<(f64, f64)> {
    kernel_constants(parse("kernel", kernel)?).map_err(py_err)
}

/// Runs an experiment from a JSON config string; returns the summary as JSON.
#[pyfunction]
fn experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json_reader(config_json.as_bytes()).map_err(py_err)?;
    let out = py.detach(|| run_experiment(&cfg)).map_err(py_err)?;
    serde_json::to_string(&out.summary).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn dynrec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMat>()?;
    m.add_class::<PyPanel>()?;
    m.add_function(wrap_pyfunction!(svt, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(plug_in_bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(recover, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_moments, m)?)?;
    m.add_function(wrap_pyfunction!(experiment, m)?)?;
    Ok(())
}
