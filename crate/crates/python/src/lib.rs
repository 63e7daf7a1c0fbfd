//! Python bindings for `functau`.
//!
//! Curves are passed as lists of rows, sparse subjects as lists of
//! `(times, values)` pairs. Validation problems raise `ValueError`, numerical
//! failures raise `RuntimeError`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use functau::concordance;
use functau::io::report_json;
use functau::nulldist::NullDistribution;
use functau::simgen::{self, Design, NormalScale, ScenarioConfig, StudyOptions};
use functau::{Bandwidth, DenseSample, KChoice, SmootherConfig, SparseSample, Subject, TestOptions};

fn to_py(e: functau::Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn dense(grid: &[f64], curves: &[Vec<f64>], responses: &[f64]) -> PyResult<DenseSample> {
    DenseSample::new(grid, curves, responses).map_err(to_py)
}

fn sparse(
    subjects: Vec<(Vec<f64>, Vec<f64>)>,
    responses: &[f64],
    domain: Option<(f64, f64)>,
) -> PyResult<SparseSample> {
    let records = subjects.into_iter().map(|(times, values)| Subject { times, values }).collect();
    SparseSample::new(records, responses, domain).map_err(to_py)
}

fn parse<T: std::str::FromStr<Err = functau::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Outcome of a dense or sparse association test.
#[pyclass(frozen, get_all, module = "functau_py")]
struct TestReport {
    statistic: f64,
    statistic_label: &'static str,
    eigenvalues: Vec<f64>,
    d: usize,
    fve: f64,
    p_value: f64,
    mc_se: f64,
    alpha: Option<f64>,
    critical_value: Option<f64>,
    reject: Option<bool>,
    n: usize,
    m: usize,
    seed: u64,
    mc_draws: usize,
    null_scale: f64,
    max_tied_fraction: f64,
    tie_warning: bool,
    degenerate: bool,
    k: Option<usize>,
    k_fixed: Option<bool>,
    sigma2: Option<f64>,
    output_grid_size: Option<usize>,
    json: String,
}

impl From<functau::TestReport> for TestReport {
    fn from(r: functau::TestReport) -> Self {
        let d = &r.diagnostics;
        Self {
            statistic: r.statistic,
            statistic_label: r.statistic_label,
            eigenvalues: r.spectrum.retained().to_vec(),
            d: r.spectrum.d,
            fve: r.spectrum.fve,
            p_value: r.p_value,
            mc_se: r.p_value_mc_se,
            alpha: r.alpha,
            critical_value: r.alpha_critical,
            reject: r.reject,
            n: d.n,
            m: d.m,
            seed: d.seed,
            mc_draws: d.mc_draws,
            null_scale: d.null_scale,
            max_tied_fraction: d.max_tied_fraction,
            tie_warning: d.tie_warning,
            degenerate: d.degenerate,
            k: d.k,
            k_fixed: d.k_fixed,
            sigma2: d.sigma2,
            output_grid_size: d.output_grid_size,
            json: report_json(&r),
        }
    }
}

#[pymethods]
impl TestReport {
    fn __repr__(&self) -> String {
        format!(
            "TestReport({}={:.6e}, d={}, p_value={:.4e}, n={})",
            self.statistic_label, self.statistic, self.d, self.p_value, self.n
        )
    }
}

#[pyfunction]
#[pyo3(signature = (grid, curves, responses, fve=0.95, mc_draws=100_000, seed=0, alpha=None))]
#[allow(clippy::too_many_arguments)]
fn dense_test(
    py: Python<'_>,
    grid: Vec<f64>,
    curves: Vec<Vec<f64>>,
    responses: Vec<f64>,
    fve: f64,
    mc_draws: usize,
    seed: u64,
    alpha: Option<f64>,
) -> PyResult<TestReport> {
    let sample = dense(&grid, &curves, &responses)?;
    let opts = TestOptions { fve, mc_draws, seed, alpha };
    py.detach(|| functau::dense_test(&sample, &opts)).map(Into::into).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (
    subjects, responses, grid_size=51, k=None, mean_bandwidth="auto", cov_bandwidth="auto",
    domain=None, fve=0.95, mc_draws=100_000, seed=0, alpha=None
))]
#[allow(clippy::too_many_arguments)]
fn sparse_test(
    py: Python<'_>,
    subjects: Vec<(Vec<f64>, Vec<f64>)>,
    responses: Vec<f64>,
    grid_size: usize,
    k: Option<usize>,
    mean_bandwidth: &str,
    cov_bandwidth: &str,
    domain: Option<(f64, f64)>,
    fve: f64,
    mc_draws: usize,
    seed: u64,
    alpha: Option<f64>,
) -> PyResult<TestReport> {
    let sample = sparse(subjects, &responses, domain)?;
    let cfg = SmootherConfig {
        mean_bandwidth: parse::<Bandwidth>(mean_bandwidth)?,
        cov_bandwidth: parse::<Bandwidth>(cov_bandwidth)?,
        output_grid_size: grid_size,
        seed,
        ..Default::default()
    };
    cfg.validate().map_err(to_py)?;
    let k = match k {
        Some(k) => KChoice::Fixed(k),
        None => KChoice::CrossValidated(cfg.default_k_candidates()),
    };
    let opts = TestOptions { fve, mc_draws, seed, alpha };
    py.detach(|| functau::sparse_test(&sample, &cfg, &k, &opts)).map(Into::into).map_err(to_py)
}

/// Centred concordance fraction `U_n(t)` at each grid point.
#[pyfunction]
fn u_curve(grid: Vec<f64>, curves: Vec<Vec<f64>>, responses: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(concordance::u_curve_fast(&dense(&grid, &curves, &responses)?))
}

/// `T = ∫ U_n(t)² dt` on the sample's grid.
#[pyfunction]
fn statistic(grid: Vec<f64>, curves: Vec<Vec<f64>>, responses: Vec<f64>) -> PyResult<f64> {
    let sample = dense(&grid, &curves, &responses)?;
    concordance::statistic_t(&concordance::u_curve_fast(&sample), sample.grid()).map_err(to_py)
}

/// Projection curves `W_i(t)`, one row per subject.
#[pyfunction]
fn projections(grid: Vec<f64>, curves: Vec<Vec<f64>>, responses: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let proj = concordance::projections(&dense(&grid, &curves, &responses)?);
    Ok((0..proj.n()).map(|i| proj.row(i).to_vec()).collect())
}

/// All eigenvalues of the projection covariance operator, the retained count
/// and the variance fraction they explain.
#[pyfunction]
#[pyo3(signature = (grid, curves, responses, fve=0.95))]
fn spectrum(grid: Vec<f64>, curves: Vec<Vec<f64>>, responses: Vec<f64>, fve: f64) -> PyResult<(Vec<f64>, usize, f64)> {
    let proj = concordance::projections(&dense(&grid, &curves, &responses)?);
    let s = concordance::spectrum(&proj, fve).map_err(to_py)?;
    Ok((s.eigenvalues, s.d, s.fve))
}

/// Monte Carlo sampler for `Σ_k w_k Z_k²`.
#[pyclass(frozen, module = "functau_py")]
struct MixtureSampler {
    inner: functau::MixtureSampler,
    null: NullDistribution,
}

#[pymethods]
impl MixtureSampler {
    #[new]
    #[pyo3(signature = (weights, draws=100_000, seed=0))]
    fn new(py: Python<'_>, weights: Vec<f64>, draws: usize, seed: u64) -> PyResult<Self> {
        let inner = functau::MixtureSampler::new(weights, draws, seed).map_err(to_py)?;
        let null = py.detach(|| inner.distribution());
        Ok(Self { inner, null })
    }

    /// Draws in generation order.
    fn sample(&self, py: Python<'_>) -> Vec<f64> {
        py.detach(|| self.inner.sample())
    }

    /// Add-one Monte Carlo p-value and its standard error.
    fn p_value(&self, statistic: f64) -> (f64, f64) {
        self.null.p_value(statistic)
    }

    fn critical_value(&self, alpha: f64) -> PyResult<f64> {
        self.null.critical_value(alpha).map_err(to_py)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn draws(&self) -> usize {
        self.inner.draws()
    }
}

fn scenario(
    design: &str,
    case: u8,
    n: usize,
    delta: f64,
    p: usize,
    seed: u64,
    normal_scale: &str,
) -> PyResult<ScenarioConfig> {
    let mut cfg = ScenarioConfig::new(parse::<Design>(design)?, case, n, delta);
    cfg.p = p;
    cfg.seed = seed;
    cfg.normal_scale = parse::<NormalScale>(normal_scale)?;
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

/// One simulated design-I dataset: `(grid, curves, responses)`.
/// Grid, curves and responses.
type DenseData = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>);

#[pyfunction]
#[pyo3(signature = (case, n, delta, p=5, seed=1, replicate=0, normal_scale="sd"))]
fn simulate_dense(
    case: u8,
    n: usize,
    delta: f64,
    p: usize,
    seed: u64,
    replicate: u64,
    normal_scale: &str,
) -> PyResult<DenseData> {
    let cfg = scenario("sim1", case, n, delta, p, seed, normal_scale)?;
    let sample = simgen::gen_sim1(&cfg, &mut simgen::replicate_rng(seed, replicate)).map_err(to_py)?;
    Ok((sample.grid().points().to_vec(), sample.rows(), sample.responses().to_vec()))
}

/// One simulated design-II or design-III dataset: `(subjects, responses)`.
#[pyfunction]
#[pyo3(signature = (design, case, n, delta, seed=1, replicate=0, normal_scale="sd"))]
#[allow(clippy::type_complexity)]
fn simulate_sparse(
    design: &str,
    case: u8,
    n: usize,
    delta: f64,
    seed: u64,
    replicate: u64,
    normal_scale: &str,
) -> PyResult<(Vec<(Vec<f64>, Vec<f64>)>, Vec<f64>)> {
    let cfg = scenario(design, case, n, delta, 5, seed, normal_scale)?;
    let mut rng = simgen::replicate_rng(seed, replicate);
    let sample = match cfg.design {
        Design::SimII => simgen::gen_sim2(&cfg, &mut rng),
        Design::SimIII => simgen::gen_sim3(&cfg, &mut rng),
        Design::SimI => return Err(PyValueError::new_err("use simulate_dense for design sim1")),
    }
    .map_err(to_py)?;
    let subjects = sample.subjects().iter().map(|s| (s.times.clone(), s.values.clone())).collect();
    Ok((subjects, sample.responses().to_vec()))
}

/// Rejection rate over seeded replicates:
/// `(rejection_rate, se, p_values, failed)` with `None` for failed replicates.
#[pyfunction]
#[pyo3(signature = (
    design, case, n, delta, replicates=300, p=5, alpha=0.05, seed=1, normal_scale="sd",
    fve=0.95, mc_draws=20_000, k=None
))]
#[allow(clippy::too_many_arguments)]
fn power_study(
    py: Python<'_>,
    design: &str,
    case: u8,
    n: usize,
    delta: f64,
    replicates: usize,
    p: usize,
    alpha: f64,
    seed: u64,
    normal_scale: &str,
    fve: f64,
    mc_draws: usize,
    k: Option<usize>,
) -> PyResult<(f64, f64, Vec<Option<f64>>, usize)> {
    let mut cfg = scenario(design, case, n, delta, p, seed, normal_scale)?;
    cfg.replicates = replicates;
    cfg.alpha = alpha;
    let opts = StudyOptions { fve, mc_draws, k, ..Default::default() };
    let res = py.detach(|| simgen::power_study(&cfg, &opts)).map_err(to_py)?;
    Ok((res.rejection_rate, res.se, res.per_replicate, res.failed))
}

#[pymodule]
fn functau_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<TestReport>()?;
    m.add_class::<MixtureSampler>()?;
    m.add_function(wrap_pyfunction!(dense_test, m)?)?;
    m.add_function(wrap_pyfunction!(sparse_test, m)?)?;
    m.add_function(wrap_pyfunction!(u_curve, m)?)?;
    m.add_function(wrap_pyfunction!(statistic, m)?)?;
    m.add_function(wrap_pyfunction!(projections, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_dense, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_sparse, m)?)?;
    m.add_function(wrap_pyfunction!(power_study, m)?)?;
    Ok(())
}
