//! Validated sample types shared by every stage of the test.
//!
//! All time coordinates are stored on the unit interval. Raw inputs on any
//! interval `[a, b]` are mapped there affinely during validation, so the
//! quadrature and smoothing code never has to know about the original scale.

use serde::Serialize;

use crate::error::{Error, Result};

/// Strictly increasing evaluation points on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    /// Validates raw times and rescales them so the first point maps to 0 and
    /// the last to 1.
    pub fn rescaled(raw: &[f64]) -> Result<Self> {
        check_increasing(raw)?;
        let lo = raw[0];
        let hi = raw[raw.len() - 1];
        Ok(Self { points: raw.iter().map(|&t| rescale(t, lo, hi)).collect() })
    }

    /// Accepts points that already lie in `[0, 1]` without rescaling.
    pub fn unit(points: Vec<f64>) -> Result<Self> {
        check_increasing(&points)?;
        if let Some(&t) = points.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::OutsideDomain { time: t, lo: 0.0, hi: 1.0 });
        }
        Ok(Self { points })
    }

    /// `size` equally spaced points covering `[0, 1]`.
    pub fn uniform(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::GridTooShort(size));
        }
        let last = (size - 1) as f64;
        Ok(Self { points: (0..size).map(|j| j as f64 / last).collect() })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Trapezoid rule weights, so that `∫f ≈ Σ w_j f(t_j)`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let m = self.points.len();
        let mut w = vec![0.0; m];
        for j in 0..m - 1 {
            let half = 0.5 * (self.points[j + 1] - self.points[j]);
            w[j] += half;
            w[j + 1] += half;
        }
        w
    }

    /// Trapezoid approximation of `∫ f(t) g(t) dt`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.trapezoid_weights().iter().zip(f.iter().zip(g)).map(|(w, (a, b))| w * a * b).sum()
    }

    /// Linear interpolation of values given on this grid, clamped at the ends.
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        let p = &self.points;
        if t <= p[0] {
            return values[0];
        }
        let last = p.len() - 1;
        if t >= p[last] {
            return values[last];
        }
        let hi = p.partition_point(|&x| x <= t);
        let lo = hi - 1;
        let frac = (t - p[lo]) / (p[hi] - p[lo]);
        values[lo] + frac * (values[hi] - values[lo])
    }
}

fn check_increasing(raw: &[f64]) -> Result<()> {
    if raw.len() < 2 {
        return Err(Error::GridTooShort(raw.len()));
    }
    if raw.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("grid".into()));
    }
    match raw.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(Error::GridNotIncreasing(i + 1)),
        None => Ok(()),
    }
}

fn rescale(t: f64, lo: f64, hi: f64) -> f64 {
    ((t - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// `n` curves on a shared grid together with their scalar responses.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSample {
    grid: Grid,
    /// Row-major `n × m`.
    curves: Vec<f64>,
    responses: Vec<f64>,
}

impl DenseSample {
    /// Validates raw rows observed at `grid_times` (any increasing times; they
    /// are rescaled to `[0, 1]`).
    pub fn new(grid_times: &[f64], rows: &[Vec<f64>], responses: &[f64]) -> Result<Self> {
        let grid = Grid::rescaled(grid_times)?;
        Self::on_grid(grid, rows, responses)
    }

    /// Validates rows already evaluated on a unit-interval grid.
    pub fn on_grid(grid: Grid, rows: &[Vec<f64>], responses: &[f64]) -> Result<Self> {
        let m = grid.len();
        if rows.len() != responses.len() {
            return Err(Error::ResponseLengthMismatch { subjects: rows.len(), responses: responses.len() });
        }
        if rows.len() < 2 {
            return Err(Error::TooFewSubjects(rows.len()));
        }
        let mut curves = Vec::with_capacity(rows.len() * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::NonRectangular { row: i, expected: m, found: row.len() });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("curve {i}")));
            }
            curves.extend_from_slice(row);
        }
        if responses.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite("responses".into()));
        }
        Ok(Self { grid, curves, responses: responses.to_vec() })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn curve(&self, i: usize) -> &[f64] {
        let m = self.m();
        &self.curves[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.curves.chunks(self.m()).map(<[f64]>::to_vec).collect()
    }

    /// Values of every curve at grid index `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.curves.iter().skip(j).step_by(self.m()).copied().collect()
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    /// Same curves with different responses (used for permutation checks and
    /// monotone response transforms).
    pub fn with_responses(&self, responses: &[f64]) -> Result<Self> {
        Self::on_grid(self.grid.clone(), &self.rows(), responses)
    }
}

/// Irregularly observed values for one subject.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subject {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Subject {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Sparse, irregular longitudinal observations plus responses.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSample {
    subjects: Vec<Subject>,
    responses: Vec<f64>,
}

impl SparseSample {
    /// Validates raw records. `domain` is the interval the times were observed
    /// on; when omitted the observed time range is used. Times are rescaled to
    /// `[0, 1]` and sorted within each subject.
    pub fn new(records: Vec<Subject>, responses: &[f64], domain: Option<(f64, f64)>) -> Result<Self> {
        if records.len() != responses.len() {
            return Err(Error::ResponseLengthMismatch { subjects: records.len(), responses: responses.len() });
        }
        if records.len() < 2 {
            return Err(Error::TooFewSubjects(records.len()));
        }
        if responses.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite("responses".into()));
        }
        for (i, s) in records.iter().enumerate() {
            if s.times.len() != s.values.len() {
                return Err(Error::RaggedSubject { subject: i, times: s.times.len(), values: s.values.len() });
            }
            if s.is_empty() {
                return Err(Error::EmptySubject(i));
            }
            if s.times.iter().chain(&s.values).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("subject {i}")));
            }
        }
        if records.iter().all(|s| s.len() < 2) {
            return Err(Error::CovarianceUnidentifiable);
        }

        let (lo, hi) = match domain {
            Some(d) => d,
            None => records
                .iter()
                .flat_map(|s| s.times.iter())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t))),
        };
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidDomain(lo, hi));
        }

        let mut subjects = Vec::with_capacity(records.len());
        for (i, s) in records.into_iter().enumerate() {
            if let Some(&t) = s.times.iter().find(|&&t| t < lo || t > hi) {
                return Err(Error::OutsideDomain { time: t, lo, hi });
            }
            let mut pairs: Vec<(f64, f64)> = s.times.iter().map(|&t| rescale(t, lo, hi)).zip(s.values).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
                let raw = lo + w[0].0 * (hi - lo);
                return Err(Error::DuplicateTime { subject: i, time: raw });
            }
            let (times, values) = pairs.into_iter().unzip();
            subjects.push(Subject { times, values });
        }
        Ok(Self { subjects, responses: responses.to_vec() })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    /// Per-subject observation counts `N_i`.
    pub fn counts(&self) -> Vec<usize> {
        self.subjects.iter().map(Subject::len).collect()
    }

    pub fn total_observations(&self) -> usize {
        self.subjects.iter().map(Subject::len).sum()
    }

    pub fn with_responses(&self, responses: &[f64]) -> Result<Self> {
        Self::new(self.subjects.clone(), responses, Some((0.0, 1.0)))
    }
}

/// Empirical Hájek projections `W_i(t)` on the sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    pub(crate) grid: Grid,
    /// Row-major `n × m`.
    pub(crate) values: Vec<f64>,
    pub(crate) n: usize,
}

impl ProjectionSet {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.grid.len();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Descending, nonnegative eigenvalues of the projection covariance operator
/// together with the truncation that reaches the requested variance share.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub d: usize,
    pub fve: f64,
    /// Every eigenvalue is zero (constant projections).
    pub degenerate: bool,
}

impl Spectrum {
    /// Builds a spectrum from raw eigenvalues: sorts descending, clamps
    /// negatives to zero and picks the smallest `d` whose cumulative share of
    /// the total reaches `fve_target`.
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>, fve_target: f64) -> Result<Self> {
        if !(fve_target > 0.0 && fve_target <= 1.0) {
            return Err(Error::InvalidParameter(format!("fve target {fve_target} not in (0, 1]")));
        }
        for v in eigenvalues.iter_mut() {
            if *v < 0.0 || !v.is_finite() {
                *v = 0.0;
            }
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = eigenvalues.iter().sum();
        if eigenvalues.is_empty() || total <= 0.0 {
            return Ok(Self { eigenvalues: vec![0.0], d: 1, fve: 0.0, degenerate: true });
        }
        let goal = fve_target * total * (1.0 - 1e-12);
        let mut cum = 0.0;
        let mut d = eigenvalues.len();
        for (k, v) in eigenvalues.iter().enumerate() {
            cum += v;
            if cum >= goal {
                d = k + 1;
                break;
            }
        }
        let retained: f64 = eigenvalues[..d].iter().sum();
        Ok(Self { eigenvalues, d, fve: retained / total, degenerate: false })
    }

    /// The `d` leading eigenvalues used by the null approximation.
    pub fn retained(&self) -> &[f64] {
        &self.eigenvalues[..self.d]
    }
}

/// Fitted sparse functional PCA model on an output grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FpcaModel {
    pub grid: Grid,
    pub mean: Vec<f64>,
    /// Descending, nonnegative; one per row of `eigenfunctions`.
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<Vec<f64>>,
    pub sigma2: f64,
    /// Number of components used for prediction.
    pub k: usize,
    pub mean_bandwidth: f64,
    pub cov_bandwidth: f64,
    /// Sum of all positive eigenvalues of the smoothed covariance surface.
    pub total_variance: f64,
}

impl FpcaModel {
    /// Fraction of the total variance carried by the first `k` components.
    pub fn fve(&self, k: usize) -> f64 {
        if self.total_variance <= 0.0 {
            return 0.0;
        }
        self.eigenvalues.iter().take(k).sum::<f64>() / self.total_variance
    }

    /// Same fitted components with a different number used for prediction.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.eigenvalues.len() {
            return Err(Error::InvalidParameter(format!("K = {k} outside 1..={}", self.eigenvalues.len())));
        }
        Ok(Self { k, ..self.clone() })
    }
}

/// Named side information carried by a [`TestReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    pub mc_draws: usize,
    pub fve_target: f64,
    /// Factor applied to the eigenvalues in the null mixture (`4 / n`).
    pub null_scale: f64,
    /// Largest fraction of tied pairs (in `Y` or in `X(t)`) over grid points.
    pub max_tied_fraction: f64,
    /// Set when `max_tied_fraction` exceeds 5%.
    pub tie_warning: bool,
    pub degenerate: bool,
    pub k: Option<usize>,
    pub k_fixed: Option<bool>,
    pub sigma2: Option<f64>,
    pub output_grid_size: Option<usize>,
}

/// Outcome of a dense or sparse association test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    /// `T` for dense input, `T̂^K` for reconstructed sparse input.
    pub statistic: f64,
    pub statistic_label: &'static str,
    pub spectrum: Spectrum,
    pub p_value: f64,
    pub p_value_mc_se: f64,
    pub alpha: Option<f64>,
    pub alpha_critical: Option<f64>,
    pub reject: Option<bool>,
    pub diagnostics: Diagnostics,
}
