//! Conditional-expectation scores, curve reconstruction and K selection.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{fit, KChoice, SmootherConfig};
use crate::domain::{DenseSample, FpcaModel, SparseSample};
use crate::error::{Error, Result};

const RIDGE_CONDITION: f64 = 1e12;
const RIDGE_FACTOR: f64 = 1e-8;

/// Factorised observation covariance for one subject.
#[derive(Debug, Clone)]
struct SubjectSystem {
    /// `φ_k(T_ij)`, `N_i × K`.
    phi: DMatrix<f64>,
    residual: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

/// Model `Σ_G = Φ Γ Φᵀ + σ² I` at the given times, factorised.
fn factorise(model: &FpcaModel, k: usize, times: &[f64], subject: usize) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
    let n = times.len();
    let phi = DMatrix::from_fn(n, k, |j, c| model.grid.interpolate(&model.eigenfunctions[c], times[j]));
    let gamma = DMatrix::from_diagonal(&DVector::from_iterator(k, model.eigenvalues[..k].iter().copied()));
    let mut sigma = &phi * gamma * phi.transpose();
    for j in 0..n {
        sigma[(j, j)] += model.sigma2;
    }
    let sigma = 0.5 * (&sigma + sigma.transpose());

    let ev = SymmetricEigen::new(sigma.clone()).eigenvalues;
    let hi = ev.max();
    let lo = ev.min();
    let mut sigma = sigma;
    if !(lo > 0.0 && hi / lo <= RIDGE_CONDITION) {
        let ridge = RIDGE_FACTOR * sigma.trace() / n as f64;
        for j in 0..n {
            sigma[(j, j)] += ridge;
        }
    }
    let chol = Cholesky::new(sigma).ok_or(Error::SingularCovariance(subject))?;
    Ok((phi, chol))
}

fn scores_from(
    model: &FpcaModel,
    k: usize,
    phi: &DMatrix<f64>,
    chol: &Cholesky<f64, Dyn>,
    residual: &DVector<f64>,
) -> Vec<f64> {
    let solved = chol.solve(residual);
    let proj = phi.transpose() * solved;
    (0..k).map(|c| model.eigenvalues[c] * proj[c]).collect()
}

/// Best linear predictor of component scores from a subset of one subject's
/// observations, using the first `k` components of `model`.
pub(crate) fn predict_scores(
    model: &FpcaModel,
    k: usize,
    times: &[f64],
    values: &[f64],
    subject: usize,
) -> Result<Vec<f64>> {
    let (phi, chol) = factorise(model, k, times, subject)?;
    let residual = DVector::from_iterator(
        times.len(),
        times.iter().zip(values).map(|(&t, &v)| v - model.grid.interpolate(&model.mean, t)),
    );
    Ok(scores_from(model, k, &phi, &chol, &residual))
}

/// A fitted model with each subject's observation covariance factorised.
#[derive(Debug, Clone)]
pub struct ScorePredictor {
    model: FpcaModel,
    systems: Vec<SubjectSystem>,
}

impl ScorePredictor {
    pub fn new(model: FpcaModel, sample: &SparseSample) -> Result<Self> {
        let k = model.k;
        let systems = sample
            .subjects()
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let (phi, chol) = factorise(&model, k, &s.times, i)?;
                let residual = DVector::from_iterator(
                    s.len(),
                    s.times.iter().zip(&s.values).map(|(&t, &v)| v - model.grid.interpolate(&model.mean, t)),
                );
                Ok(SubjectSystem { phi, residual, chol })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { model, systems })
    }

    pub fn model(&self) -> &FpcaModel {
        &self.model
    }

    pub fn n(&self) -> usize {
        self.systems.len()
    }

    /// `ξ̃_ik = γ_k φ_ikᵀ Σ_G,i⁻¹ (G_i − μ_i)` for `k = 1..K`.
    pub fn scores(&self, subject: usize) -> Result<Vec<f64>> {
        let sys = self.systems.get(subject).ok_or_else(|| Error::InvalidParameter(format!("no subject {subject}")))?;
        Ok(scores_from(&self.model, self.model.k, &sys.phi, &sys.chol, &sys.residual))
    }

    pub fn all_scores(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.scores(i).expect("index in range")).collect()
    }
}

/// Conditional scores of one subject.
pub fn conditional_scores(predictor: &ScorePredictor, subject: usize) -> Result<Vec<f64>> {
    predictor.scores(subject)
}

/// `X̂_i(t) = μ̂(t) + Σ_{k≤K} ξ̃_ik φ̂_k(t)` on the model grid, paired with
/// `responses`.
pub fn reconstruct(model: &FpcaModel, scores: &[Vec<f64>], responses: &[f64]) -> Result<DenseSample> {
    if model.k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    let g = model.grid.len();
    let mut rows = Vec::with_capacity(scores.len());
    for xi in scores {
        if xi.len() != model.k {
            return Err(Error::LengthMismatch { expected: model.k, found: xi.len() });
        }
        let mut row = model.mean.clone();
        for (c, &score) in xi.iter().enumerate() {
            for (r, phi) in row.iter_mut().zip(&model.eigenfunctions[c][..g]) {
                *r += score * phi;
            }
        }
        rows.push(row);
    }
    DenseSample::on_grid(model.grid.clone(), &rows, responses)
}

/// Chooses `K` by predicting one randomly held-out observation per subject
/// (subjects with at least two observations) from the others. Ties go to the
/// smaller `K`.
pub fn select_k(sample: &SparseSample, cfg: &SmootherConfig, candidates: &[usize]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("empty K candidate list".into()));
    }
    let k_max = *candidates.iter().max().expect("nonempty");
    let model = fit(sample, cfg, &KChoice::Fixed(k_max))?;
    select_k_with(&model, sample, candidates, cfg.seed)
}

/// K selection against an already fitted model holding at least
/// `max(candidates)` components.
pub fn select_k_with(model: &FpcaModel, sample: &SparseSample, candidates: &[usize], seed: u64) -> Result<usize> {
    let mut cands = candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();
    if cands.len() == 1 {
        check_candidates(model, &cands)?;
        return Ok(cands[0]);
    }
    let errors = cv_errors(model, sample, &cands, seed)?;
    let best = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let chosen =
        cands.iter().zip(&errors).find(|(_, &e)| e <= best * (1.0 + 1e-9)).map(|(&k, _)| k).expect("minimum exists");
    Ok(chosen)
}

fn check_candidates(model: &FpcaModel, cands: &[usize]) -> Result<()> {
    match (cands.first(), cands.last()) {
        (Some(&lo), Some(&hi)) if lo >= 1 && hi <= model.eigenvalues.len() => Ok(()),
        (None, _) => Err(Error::InvalidParameter("empty K candidate list".into())),
        _ => Err(Error::InvalidParameter(format!("K candidates must lie in 1..={}", model.eigenvalues.len()))),
    }
}

/// Held-out mean squared prediction error for each candidate `K`, in the
/// order given. The same held-out observation is used for every candidate.
pub fn cv_errors(model: &FpcaModel, sample: &SparseSample, candidates: &[usize], seed: u64) -> Result<Vec<f64>> {
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    check_candidates(model, &sorted)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let holdouts: Vec<(usize, usize)> = sample
        .subjects()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.len() >= 2)
        .map(|(i, s)| (i, rng.random_range(0..s.len())))
        .collect();
    if holdouts.is_empty() {
        return Err(Error::NoHoldoutSubjects);
    }

    candidates
        .par_iter()
        .map(|&k| {
            let mut sse = 0.0;
            for &(i, j) in &holdouts {
                let s = &sample.subjects()[i];
                let times: Vec<f64> = s.times.iter().enumerate().filter(|&(l, _)| l != j).map(|(_, &t)| t).collect();
                let values: Vec<f64> = s.values.iter().enumerate().filter(|&(l, _)| l != j).map(|(_, &v)| v).collect();
                let xi = predict_scores(model, k, &times, &values, i)?;
                let t = s.times[j];
                let mut pred = model.grid.interpolate(&model.mean, t);
                for (c, score) in xi.iter().enumerate() {
                    pred += score * model.grid.interpolate(&model.eigenfunctions[c], t);
                }
                sse += (s.values[j] - pred).powi(2);
            }
            Ok(sse / holdouts.len() as f64)
        })
        .collect()
}
