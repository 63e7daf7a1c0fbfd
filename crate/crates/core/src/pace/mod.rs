//! Sparse functional PCA by conditional expectation.
//!
//! Pooled observations give a smoothed mean and covariance surface; the
//! surface's eigenpairs and the noise variance then feed best linear
//! predictors of each subject's component scores.

mod scores;
mod smooth;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::domain::{FpcaModel, Grid, SparseSample};
use crate::error::{Error, Result};
use smooth::{candidate_bandwidths, merge_locations, rank_bandwidths, Scatter1, Scatter2, CV_CANDIDATES, CV_FOLDS};

pub use scores::{conditional_scores, cv_errors, reconstruct, select_k, select_k_with, ScorePredictor};

/// Kernel bandwidth: a fixed width on the unit domain, or chosen by 5-fold
/// cross-validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for Bandwidth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        match s.parse::<f64>() {
            Ok(h) if h > 0.0 && h.is_finite() => Ok(Self::Fixed(h)),
            _ => Err(Error::InvalidParameter(format!("bandwidth {s:?} is neither \"auto\" nor a positive number"))),
        }
    }
}

/// Smoothing and output settings for [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherConfig {
    pub mean_bandwidth: Bandwidth,
    pub cov_bandwidth: Bandwidth,
    pub output_grid_size: usize,
    /// Leave diagonal raw covariances (inflated by noise) out of the surface fit.
    pub diag_exclusion: bool,
    /// Seeds the held-out observation choice in K selection.
    pub seed: u64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            mean_bandwidth: Bandwidth::Auto,
            cov_bandwidth: Bandwidth::Auto,
            output_grid_size: 51,
            diag_exclusion: true,
            seed: 0,
        }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<()> {
        for bw in [self.mean_bandwidth, self.cov_bandwidth] {
            if let Bandwidth::Fixed(h) = bw {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(Error::InvalidParameter(format!("bandwidth {h} must be positive")));
                }
            }
        }
        if self.output_grid_size < 10 {
            return Err(Error::InvalidParameter(format!("output grid size {} below 10", self.output_grid_size)));
        }
        Ok(())
    }

    pub fn output_grid(&self) -> Result<Grid> {
        Grid::uniform(self.output_grid_size)
    }

    /// Default candidate truncations `1..=min(10, g − 1)`.
    pub fn default_k_candidates(&self) -> Vec<usize> {
        (1..=10.min(self.output_grid_size - 1)).collect()
    }
}

/// How many components to keep.
#[derive(Debug, Clone, PartialEq)]
pub enum KChoice {
    Fixed(usize),
    CrossValidated(Vec<usize>),
}

/// Smoothed mean on the output grid and the bandwidth that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanEstimate {
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

/// Smoothed covariance surface (row-major `g × g`) with the noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub surface: Vec<f64>,
    pub size: usize,
    pub sigma2: f64,
    pub bandwidth: f64,
}

impl CovarianceEstimate {
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.surface[a * self.size + b]
    }
}

const MIN_POOLED: usize = 10;

fn subject_fold(i: usize) -> usize {
    i % CV_FOLDS
}

/// Local linear mean of the pooled observations, evaluated on the output grid.
pub fn estimate_mean(sample: &SparseSample, cfg: &SmootherConfig) -> Result<MeanEstimate> {
    cfg.validate()?;
    let pooled = sample.total_observations();
    if pooled < MIN_POOLED {
        return Err(Error::InvalidParameter(format!(
            "mean smoothing needs at least {MIN_POOLED} pooled observations, got {pooled}"
        )));
    }
    let grid = cfg.output_grid()?;
    let tagged: Vec<(usize, f64, f64)> = sample
        .subjects()
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.times.iter().zip(&s.values).map(move |(&t, &v)| (i, t, v)))
        .collect();
    let all = Scatter1::new(tagged.iter().map(|&(_, t, v)| (t, v)));

    let bandwidths = match cfg.mean_bandwidth {
        Bandwidth::Fixed(h) => vec![h],
        Bandwidth::Auto => {
            let train: Vec<Scatter1> = (0..CV_FOLDS)
                .map(|f| Scatter1::new(tagged.iter().filter(|p| subject_fold(p.0) != f).map(|&(_, t, v)| (t, v))))
                .collect();
            let ranked = rank_bandwidths(&candidate_bandwidths(1.0, CV_CANDIDATES), |fold, h| {
                tagged
                    .iter()
                    .filter(|p| subject_fold(p.0) == fold)
                    .map(|&(_, t, v)| train[fold].fit_at(t, h).map(|fit| (v - fit).powi(2)))
                    .sum()
            });
            if ranked.is_empty() {
                return Err(Error::InvalidParameter("no candidate mean bandwidth could be evaluated".into()));
            }
            ranked
        }
    };
    let mut last_err = None;
    for h in bandwidths {
        match all.fit_grid(grid.points(), h) {
            Ok(values) => return Ok(MeanEstimate { values, bandwidth: h }),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one bandwidth"))
}

struct RawCovariance {
    /// `(subject, s, t, product)` for `j ≠ l`, both orders.
    off: Vec<(usize, f64, f64, f64)>,
    /// `(t, squared residual)`.
    diag: Vec<(f64, f64)>,
}

fn raw_covariance(sample: &SparseSample, mean: &[f64], grid: &Grid, diag_exclusion: bool) -> RawCovariance {
    let mut off = Vec::new();
    let mut diag = Vec::new();
    for (i, s) in sample.subjects().iter().enumerate() {
        let resid: Vec<f64> = s.times.iter().zip(&s.values).map(|(&t, &v)| v - grid.interpolate(mean, t)).collect();
        for j in 0..s.len() {
            diag.push((s.times[j], resid[j] * resid[j]));
            for l in 0..s.len() {
                if j != l || !diag_exclusion {
                    off.push((i, s.times[j], s.times[l], resid[j] * resid[l]));
                }
            }
        }
    }
    RawCovariance { off, diag }
}

/// A held-out location `(s, t)` with `Σz`, `Σz²` and the pair count.
type HeldOut = (f64, f64, f64, f64, f64);

/// Smoothed covariance surface from within-subject residual cross-products,
/// and the noise variance from the gap between the smoothed raw diagonal and
/// the surface diagonal over the middle half of the domain.
pub fn estimate_covariance(sample: &SparseSample, mean: &[f64], cfg: &SmootherConfig) -> Result<CovarianceEstimate> {
    cfg.validate()?;
    let grid = cfg.output_grid()?;
    if mean.len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), found: mean.len() });
    }
    let raw = raw_covariance(sample, mean, &grid, cfg.diag_exclusion);
    if raw.off.iter().all(|p| p.1 == p.2) {
        return Err(Error::CovarianceUnidentifiable);
    }
    let all = Scatter2::new(raw.off.iter().map(|&(_, s, t, z)| (s, t, z)));

    let bandwidths = match cfg.cov_bandwidth {
        Bandwidth::Fixed(h) => vec![h],
        Bandwidth::Auto => {
            let train: Vec<Scatter2> = (0..CV_FOLDS)
                .map(|f| {
                    Scatter2::new(raw.off.iter().filter(|p| subject_fold(p.0) != f).map(|&(_, s, t, z)| (s, t, z)))
                })
                .collect();
            // symmetric pairs: score each held-out pair once, and each
            // shared location once as Σ(z − f)² = Σz² − 2fΣz + c·f²
            let held_out: Vec<Vec<HeldOut>> = (0..CV_FOLDS)
                .map(|f| {
                    let in_fold = raw.off.iter().filter(|p| subject_fold(p.0) == f && p.1 <= p.2);
                    let sums = merge_locations(in_fold.clone().map(|&(_, s, t, z)| (s, t, z, 1.0)));
                    let squares = merge_locations(in_fold.map(|&(_, s, t, z)| (s, t, z * z, 0.0)));
                    sums.into_iter().zip(squares).map(|((s, t, z, c), (_, _, zz, _))| (s, t, z, zz, c)).collect()
                })
                .collect();
            let ranked = rank_bandwidths(&candidate_bandwidths(1.0, CV_CANDIDATES), |fold, h| {
                held_out[fold]
                    .iter()
                    .map(|&(s, t, z, zz, c)| {
                        train[fold].fit_at(s, t, h).map(|f| (zz - 2.0 * f * z + c * f * f).max(0.0))
                    })
                    .sum()
            });
            if ranked.is_empty() {
                return Err(Error::InvalidParameter("no candidate covariance bandwidth could be evaluated".into()));
            }
            ranked
        }
    };

    let g = grid.len();
    let pts = grid.points();
    let mut last_err = None;
    for h in bandwidths {
        let rows: Result<Vec<Vec<f64>>> =
            (0..g).into_par_iter().map(|a| (0..g).map(|b| all.fit_at(pts[a], pts[b], h)).collect()).collect();
        let rows = match rows {
            Ok(r) => r,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let mut surface = vec![0.0; g * g];
        for a in 0..g {
            for b in 0..g {
                surface[a * g + b] = 0.5 * (rows[a][b] + rows[b][a]);
            }
        }
        let diag_fit = Scatter1::new(raw.diag.iter().copied());
        let variance = match diag_fit.fit_grid(pts, h) {
            Ok(v) => v,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let diagonal: Result<Vec<f64>> = pts.iter().map(|&t| all.fit_diagonal(t, h)).collect();
        let diagonal = match diagonal {
            Ok(v) => v,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let sigma2 = noise_variance(&grid, &variance, &diagonal);
        return Ok(CovarianceEstimate { surface, size: g, sigma2, bandwidth: h });
    }
    Err(last_err.expect("at least one bandwidth"))
}

/// Trapezoid average of `variance(t) − diagonal(t)` over `[0.25, 0.75]`,
/// truncated at zero.
fn noise_variance(grid: &Grid, variance: &[f64], diagonal: &[f64]) -> f64 {
    let inner: Vec<(f64, f64)> = grid
        .points()
        .iter()
        .enumerate()
        .filter(|(_, &t)| (0.25..=0.75).contains(&t))
        .map(|(a, &t)| (t, variance[a] - diagonal[a]))
        .collect();
    if inner.len() < 2 {
        let mean = inner.iter().map(|p| p.1).sum::<f64>() / inner.len().max(1) as f64;
        return mean.max(0.0);
    }
    let mut area = 0.0;
    for w in inner.windows(2) {
        area += 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1);
    }
    let width = inner[inner.len() - 1].0 - inner[0].0;
    (area / width).max(0.0)
}

/// Leading eigenpairs of a covariance surface on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub functions: Vec<Vec<f64>>,
    /// Sum of all positive eigenvalues.
    pub total: f64,
}

/// Solves the trapezoid-discretised eigenproblem `∫S(s,t)φ(t)dt = γφ(s)` and
/// returns the `k_max` leading pairs, with `∫φ_k² = 1` and a fixed sign.
pub fn eigendecompose(surface: &[f64], grid: &Grid, k_max: usize) -> Result<Eigenpairs> {
    let g = grid.len();
    if surface.len() != g * g {
        return Err(Error::LengthMismatch { expected: g * g, found: surface.len() });
    }
    if k_max == 0 || k_max > g {
        return Err(Error::InvalidParameter(format!("K_max = {k_max} outside 1..={g}")));
    }
    let w = grid.trapezoid_weights();
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let a = DMatrix::from_fn(g, g, |i, j| sw[i] * 0.5 * (surface[i * g + j] + surface[j * g + i]) * sw[j]);
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let total = eig.eigenvalues.iter().filter(|&&v| v > 0.0).sum();

    let mut values = Vec::with_capacity(k_max);
    let mut functions = Vec::with_capacity(k_max);
    for &k in order.iter().take(k_max) {
        let v = eig.eigenvectors.column(k);
        let mut phi: Vec<f64> = (0..g).map(|i| v[i] / sw[i]).collect();
        let norm = grid.inner(&phi, &phi).sqrt();
        phi.iter_mut().for_each(|x| *x /= norm);
        let integral: f64 = w.iter().zip(&phi).map(|(a, b)| a * b).sum();
        let flip = if integral.abs() >= 1e-8 {
            integral < 0.0
        } else {
            phi.iter().find(|x| x.abs() > 1e-8).is_some_and(|&x| x < 0.0)
        };
        if flip {
            phi.iter_mut().for_each(|x| *x = -*x);
        }
        values.push(eig.eigenvalues[k].max(0.0));
        functions.push(phi);
    }
    Ok(Eigenpairs { values, functions, total })
}

/// Fits mean, covariance, noise variance and eigenpairs, then sets `K`
/// either as given or by cross-validated prediction of held-out observations.
pub fn fit(sample: &SparseSample, cfg: &SmootherConfig, k: &KChoice) -> Result<FpcaModel> {
    cfg.validate()?;
    let k_max = match k {
        KChoice::Fixed(k) => *k,
        KChoice::CrossValidated(c) => {
            if c.is_empty() {
                return Err(Error::InvalidParameter("empty K candidate list".into()));
            }
            *c.iter().max().expect("nonempty")
        }
    };
    if k_max == 0 || k_max > cfg.output_grid_size {
        return Err(Error::InvalidParameter(format!("K = {k_max} outside 1..={}", cfg.output_grid_size)));
    }
    let grid = cfg.output_grid()?;
    let mean = estimate_mean(sample, cfg)?;
    let cov = estimate_covariance(sample, &mean.values, cfg)?;
    let eig = eigendecompose(&cov.surface, &grid, k_max)?;
    let model = FpcaModel {
        grid,
        mean: mean.values,
        eigenvalues: eig.values,
        eigenfunctions: eig.functions,
        sigma2: cov.sigma2,
        k: k_max,
        mean_bandwidth: mean.bandwidth,
        cov_bandwidth: cov.bandwidth,
        total_variance: eig.total,
    };
    match k {
        KChoice::Fixed(_) => Ok(model),
        KChoice::CrossValidated(c) => {
            let chosen = select_k_with(&model, sample, c, cfg.seed)?;
            model.with_k(chosen)
        }
    }
}
