//! Simulation designs and seeded power studies.
//!
//! * Design I: dense curves on 20 equally spaced points, coefficients
//!   `Exp(rate 2)`.
//! * Design II: latent curves on a 56-point grid with `N(0, 1)` coefficients
//!   (`N(0, 0.1)` for case 3); five distinct grid points per subject observed
//!   with additive Gaussian noise.
//! * Design III: design II with `Exp(rate 2)` coefficients.
//!
//! Responses: case 1 `δ∫Xβ + N(0, 1)`, case 2 `δ∫Xβ + Exp(2)`, case 3
//! `δ∫0.001^{X(t)}dt + N(0, 0.1)` with a monomial basis. `β = Σ (k/2) ρ_k`.
//!
//! How the second argument of `N(0, v)` is read for the case-3 terms and the
//! design II/III measurement noise is controlled by [`NormalScale`].

use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;

use crate::domain::{DenseSample, Grid, SparseSample, Subject};
use crate::error::{Error, Result};
use crate::pace::{KChoice, SmootherConfig};
use crate::pipeline::{dense_test, sparse_test, TestOptions};

pub const DENSE_GRID_POINTS: usize = 20;
pub const LATENT_GRID_POINTS: usize = 56;
pub const POINTS_PER_CURVE: usize = 5;
/// Quadrature points for `∫0.001^{X(t)}dt`.
const FINE_POINTS: usize = 401;

/// `ρ_1 = 1`, `ρ_2j = √2 sin(2πjt)`, `ρ_2j+1 = √2 cos(2πjt)`.
pub fn fourier_basis(k: usize, t: f64) -> f64 {
    assert!(k >= 1, "basis index starts at 1");
    if k == 1 {
        return 1.0;
    }
    let j = (k / 2) as f64;
    let arg = 2.0 * std::f64::consts::PI * j * t;
    std::f64::consts::SQRT_2 * if k.is_multiple_of(2) { arg.sin() } else { arg.cos() }
}

/// `ρ_k(t) = t^{k−1}`.
pub fn monomial_basis(k: usize, t: f64) -> f64 {
    assert!(k >= 1, "basis index starts at 1");
    t.powi(k as i32 - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    SimI,
    SimII,
    SimIII,
}

impl std::str::FromStr for Design {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sim1" | "simi" | "i" | "1" => Ok(Self::SimI),
            "sim2" | "simii" | "ii" | "2" => Ok(Self::SimII),
            "sim3" | "simiii" | "iii" | "3" => Ok(Self::SimIII),
            _ => Err(Error::InvalidParameter(format!("unknown design {s:?}"))),
        }
    }
}

impl std::fmt::Display for Design {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SimI => "sim1",
            Self::SimII => "sim2",
            Self::SimIII => "sim3",
        })
    }
}

/// Reading of the second parameter in `N(0, v)` for the case-3 coefficient and
/// response noise and the design II/III measurement noise. Case 1 and 2
/// response noise is `N(0, 1)`, where both readings agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalScale {
    Variance,
    StdDev,
}

impl NormalScale {
    fn sd(self, v: f64) -> f64 {
        match self {
            Self::Variance => v.sqrt(),
            Self::StdDev => v,
        }
    }
}

impl std::str::FromStr for NormalScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "variance" | "var" => Ok(Self::Variance),
            "sd" | "stddev" | "std" => Ok(Self::StdDev),
            _ => Err(Error::InvalidParameter(format!("unknown normal scale {s:?}"))),
        }
    }
}

impl std::fmt::Display for NormalScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Variance => "variance",
            Self::StdDev => "sd",
        })
    }
}

/// One cell of a simulation table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub design: Design,
    pub case: u8,
    pub n: usize,
    /// Basis dimension (design I: 5 or 10; designs II/III use 5).
    pub p: usize,
    pub delta: f64,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    pub normal_scale: NormalScale,
}

impl ScenarioConfig {
    pub fn new(design: Design, case: u8, n: usize, delta: f64) -> Self {
        Self { design, case, n, p: 5, delta, replicates: 300, alpha: 0.05, seed: 1, normal_scale: NormalScale::StdDev }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n < 10 {
            return bad(format!("n = {} below 10", self.n));
        }
        if self.replicates < 1 {
            return bad("replicates must be at least 1".into());
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad(format!("delta = {} must be nonnegative", self.delta));
        }
        if !(1..=3).contains(&self.case) {
            return bad(format!("case {} not in 1..=3", self.case));
        }
        if self.p < 1 {
            return bad("p must be at least 1".into());
        }
        if self.design != Design::SimI && self.p != 5 {
            return bad(format!("design {} uses p = 5, got {}", self.design, self.p));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} not in (0, 1)", self.alpha));
        }
        Ok(())
    }
}

/// RNG for replicate `index` of a study seeded with `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

struct Curves {
    /// `X_i(t)` on the latent grid, one row per subject.
    rows: Vec<Vec<f64>>,
    responses: Vec<f64>,
}

fn basis_value(case: u8, k: usize, t: f64) -> f64 {
    if case == 3 {
        monomial_basis(k, t)
    } else {
        fourier_basis(k, t)
    }
}

fn generate_curves(
    cfg: &ScenarioConfig,
    grid: &[f64],
    coefficient: &dyn Fn(&mut ChaCha8Rng) -> f64,
    rng: &mut ChaCha8Rng,
) -> Curves {
    let p = cfg.p;
    let basis: Vec<Vec<f64>> = (1..=p).map(|k| grid.iter().map(|&t| basis_value(cfg.case, k, t)).collect()).collect();
    let fine = Grid::uniform(FINE_POINTS).expect("fine grid");
    let fine_w = fine.trapezoid_weights();
    let fine_basis: Vec<Vec<f64>> = if cfg.case == 3 {
        (1..=p).map(|k| fine.points().iter().map(|&t| monomial_basis(k, t)).collect()).collect()
    } else {
        Vec::new()
    };
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let case3_noise = Normal::new(0.0, cfg.normal_scale.sd(0.1)).expect("positive sd");
    let exp2 = Exp::new(2.0).expect("positive rate");

    let mut rows = Vec::with_capacity(cfg.n);
    let mut responses = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let eps: Vec<f64> = (0..p).map(|_| coefficient(rng)).collect();
        let row: Vec<f64> = (0..grid.len()).map(|j| (0..p).map(|k| eps[k] * basis[k][j]).sum()).collect();
        let y = match cfg.case {
            1 | 2 => {
                // ∫Xβ = Σ ε_k β_k for the orthonormal Fourier basis
                let signal: f64 = eps.iter().enumerate().map(|(k, e)| e * (k + 1) as f64 / 2.0).sum();
                let noise = if cfg.case == 1 { std_normal.sample(rng) } else { exp2.sample(rng) };
                cfg.delta * signal + noise
            }
            _ => {
                let integral: f64 = (0..FINE_POINTS)
                    .map(|j| {
                        let x: f64 = (0..p).map(|k| eps[k] * fine_basis[k][j]).sum();
                        fine_w[j] * 0.001f64.powf(x)
                    })
                    .sum();
                cfg.delta * integral + case3_noise.sample(rng)
            }
        };
        rows.push(row);
        responses.push(y);
    }
    Curves { rows, responses }
}

/// Design I sample on 20 equally spaced points.
pub fn gen_sim1(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<DenseSample> {
    cfg.validate()?;
    if cfg.design != Design::SimI {
        return Err(Error::InvalidParameter(format!("gen_sim1 called with design {}", cfg.design)));
    }
    let grid = Grid::uniform(DENSE_GRID_POINTS)?;
    let exp2 = Exp::new(2.0).expect("positive rate");
    let curves = generate_curves(cfg, grid.points(), &|r| exp2.sample(r), rng);
    DenseSample::on_grid(grid, &curves.rows, &curves.responses)
}

fn gen_sparse(
    cfg: &ScenarioConfig,
    coefficient: &dyn Fn(&mut ChaCha8Rng) -> f64,
    rng: &mut ChaCha8Rng,
) -> Result<SparseSample> {
    let latent = Grid::uniform(LATENT_GRID_POINTS)?;
    let curves = generate_curves(cfg, latent.points(), coefficient, rng);
    let noise = Normal::new(0.0, cfg.normal_scale.sd(0.2)).expect("positive sd");
    let subjects = curves
        .rows
        .iter()
        .map(|row| {
            let mut idx = sample_indices(rng, LATENT_GRID_POINTS, POINTS_PER_CURVE).into_vec();
            idx.sort_unstable();
            Subject {
                times: idx.iter().map(|&j| latent.points()[j]).collect(),
                values: idx.iter().map(|&j| row[j] + noise.sample(rng)).collect(),
            }
        })
        .collect();
    SparseSample::new(subjects, &curves.responses, Some((0.0, 1.0)))
}

/// Design II sample: Gaussian coefficients, five noisy points per curve.
pub fn gen_sim2(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<SparseSample> {
    cfg.validate()?;
    if cfg.design != Design::SimII {
        return Err(Error::InvalidParameter(format!("gen_sim2 called with design {}", cfg.design)));
    }
    let sd = if cfg.case == 3 { cfg.normal_scale.sd(0.1) } else { 1.0 };
    let coef = Normal::new(0.0, sd).expect("positive sd");
    gen_sparse(cfg, &|r| coef.sample(r), rng)
}

/// Design III sample: as design II with `Exp(rate 2)` coefficients.
pub fn gen_sim3(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<SparseSample> {
    cfg.validate()?;
    if cfg.design != Design::SimIII {
        return Err(Error::InvalidParameter(format!("gen_sim3 called with design {}", cfg.design)));
    }
    let exp2 = Exp::new(2.0).expect("positive rate");
    gen_sparse(cfg, &|r| exp2.sample(r), rng)
}

/// Test settings used inside a power study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyOptions {
    pub fve: f64,
    pub mc_draws: usize,
    pub smoother: SmootherConfig,
    /// `None` selects K by cross-validation.
    pub k: Option<usize>,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { fve: 0.95, mc_draws: 20_000, smoother: SmootherConfig::default(), k: None }
    }
}

/// Result of a power study.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerResult {
    pub rejection_rate: f64,
    pub se: f64,
    /// p-value of every replicate that ran; `None` where it failed.
    pub per_replicate: Vec<Option<f64>>,
    pub failed: usize,
    pub runtime_secs: f64,
}

impl PowerResult {
    pub fn p_values(&self) -> Vec<f64> {
        self.per_replicate.iter().flatten().copied().collect()
    }
}

/// p-value of a single replicate.
pub fn run_replicate(cfg: &ScenarioConfig, opts: &StudyOptions, index: u64) -> Result<f64> {
    let mut rng = replicate_rng(cfg.seed, index);
    // independent seeds for data, null draws and smoothing
    let test_seed = cfg.seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    let test_opts = TestOptions { fve: opts.fve, mc_draws: opts.mc_draws, seed: test_seed, alpha: None };
    let report = match cfg.design {
        Design::SimI => dense_test(&gen_sim1(cfg, &mut rng)?, &test_opts)?,
        Design::SimII | Design::SimIII => {
            let sample = if cfg.design == Design::SimII { gen_sim2(cfg, &mut rng)? } else { gen_sim3(cfg, &mut rng)? };
            let smoother = SmootherConfig { seed: test_seed, ..opts.smoother.clone() };
            let k = match opts.k {
                Some(k) => KChoice::Fixed(k),
                None => KChoice::CrossValidated(smoother.default_k_candidates()),
            };
            sparse_test(&sample, &smoother, &k, &test_opts)?
        }
    };
    Ok(report.p_value)
}

/// Runs `replicates` independent datasets through the matching test and
/// reports the rejection rate at `alpha`. Replicates that fail are excluded
/// and counted.
pub fn power_study(cfg: &ScenarioConfig, opts: &StudyOptions) -> Result<PowerResult> {
    cfg.validate()?;
    let start = Instant::now();
    let per_replicate: Vec<Option<f64>> =
        (0..cfg.replicates as u64).into_par_iter().map(|i| run_replicate(cfg, opts, i).ok()).collect();
    let ps: Vec<f64> = per_replicate.iter().flatten().copied().collect();
    let failed = per_replicate.len() - ps.len();
    if ps.is_empty() {
        return Err(Error::InvalidParameter("every replicate failed".into()));
    }
    let rate = ps.iter().filter(|&&p| p < cfg.alpha).count() as f64 / ps.len() as f64;
    Ok(PowerResult {
        rejection_rate: rate,
        se: (rate * (1.0 - rate) / ps.len() as f64).sqrt(),
        per_replicate,
        failed,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_values() {
        assert_eq!(fourier_basis(1, 0.37), 1.0);
        assert_eq!(monomial_basis(3, 0.5), 0.25);
        assert_eq!(monomial_basis(1, 0.0), 1.0);
        assert!((fourier_basis(2, 0.25) - 2f64.sqrt()).abs() < 1e-15);
        assert!((fourier_basis(3, 0.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fourier_is_orthonormal() {
        let grid = Grid::uniform(2001).unwrap();
        for j in 1..=10 {
            for k in 1..=10 {
                let a: Vec<f64> = grid.points().iter().map(|&t| fourier_basis(j, t)).collect();
                let b: Vec<f64> = grid.points().iter().map(|&t| fourier_basis(k, t)).collect();
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((grid.inner(&a, &b) - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn config_validation() {
        let ok = ScenarioConfig::new(Design::SimI, 1, 100, 0.0);
        assert!(ok.validate().is_ok());
        assert!(ScenarioConfig { replicates: 0, ..ok.clone() }.validate().is_err());
        assert!(ScenarioConfig { case: 4, ..ok.clone() }.validate().is_err());
        assert!(ScenarioConfig { n: 5, ..ok.clone() }.validate().is_err());
        assert!(ScenarioConfig { delta: -0.1, ..ok.clone() }.validate().is_err());
        let sim2 = ScenarioConfig::new(Design::SimII, 1, 100, 0.0);
        assert!(ScenarioConfig { p: 10, ..sim2 }.validate().is_err());
        let mut rng = replicate_rng(1, 0);
        assert!(gen_sim2(&ok, &mut rng).is_err());
    }

    #[test]
    fn design_one_is_deterministic() {
        let cfg = ScenarioConfig::new(Design::SimI, 1, 50, 0.1);
        let a = gen_sim1(&cfg, &mut replicate_rng(3, 7)).unwrap();
        let b = gen_sim1(&cfg, &mut replicate_rng(3, 7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.m(), 20);
        let c = gen_sim1(&cfg, &mut replicate_rng(3, 8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sparse_designs_observe_five_grid_points() {
        let latent = Grid::uniform(LATENT_GRID_POINTS).unwrap();
        for design in [Design::SimII, Design::SimIII] {
            let cfg = ScenarioConfig::new(design, 1, 300, 0.0);
            let gen = if design == Design::SimII { gen_sim2 } else { gen_sim3 };
            let s = gen(&cfg, &mut replicate_rng(11, 0)).unwrap();
            assert!(s.counts().iter().all(|&c| c == 5));
            let mut covered = std::collections::BTreeSet::new();
            for subj in s.subjects() {
                for t in &subj.times {
                    let j = latent.points().iter().position(|p| p == t).expect("on grid");
                    covered.insert(j);
                }
            }
            assert!(covered.len() >= 50);
            assert_eq!(s, gen(&cfg, &mut replicate_rng(11, 0)).unwrap());
        }
    }
}
