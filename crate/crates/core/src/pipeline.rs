//! End-to-end association tests.
//!
//! Under independence `√n U_n` converges to a centred Gaussian process whose
//! covariance is four times that of the projection `V`, so `T` is compared
//! against `Σ_k (4/n) λ̂_k Z_k²` with `λ̂_k` the retained eigenvalues of `C_w`.

use crate::concordance::{max_tied_fraction, projections, spectrum, statistic_t, u_curve_fast, TIE_WARNING_FRACTION};
use crate::domain::{DenseSample, Diagnostics, SparseSample, TestReport};
use crate::error::Result;
use crate::nulldist::{MixtureSampler, DEFAULT_DRAWS};
use crate::pace::{fit, reconstruct, KChoice, ScorePredictor, SmootherConfig};

/// Options shared by the dense and sparse tests.
#[derive(Debug, Clone, PartialEq)]
pub struct TestOptions {
    pub fve: f64,
    pub mc_draws: usize,
    pub seed: u64,
    /// When set, the report also carries the critical value and the decision.
    pub alpha: Option<f64>,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self { fve: 0.95, mc_draws: DEFAULT_DRAWS, seed: 0, alpha: None }
    }
}

/// Test of association between the responses and the curves of a dense sample.
pub fn dense_test(sample: &DenseSample, opts: &TestOptions) -> Result<TestReport> {
    run_dense(sample, opts, "T")
}

fn run_dense(sample: &DenseSample, opts: &TestOptions, label: &'static str) -> Result<TestReport> {
    let n = sample.n();
    let u = u_curve_fast(sample);
    let statistic = statistic_t(&u, sample.grid())?;
    let eig = spectrum(&projections(sample), opts.fve)?;
    let null_scale = 4.0 / n as f64;
    let tied = max_tied_fraction(sample);

    let weights: Vec<f64> = eig.retained().iter().map(|l| l * null_scale).collect();
    let sampler = MixtureSampler::new(weights, opts.mc_draws, opts.seed)?;
    let (p_value, p_value_mc_se, alpha_critical) = if eig.degenerate {
        (1.0, 0.0, opts.alpha.map(|_| 0.0))
    } else {
        let null = sampler.distribution();
        let (p, se) = null.p_value(statistic);
        let crit = opts.alpha.map(|a| null.critical_value(a)).transpose()?;
        (p, se, crit)
    };
    let reject = alpha_critical.map(|c| !eig.degenerate && statistic > c);

    Ok(TestReport {
        statistic,
        statistic_label: label,
        p_value,
        p_value_mc_se,
        alpha: opts.alpha,
        alpha_critical,
        reject,
        diagnostics: Diagnostics {
            n,
            m: sample.m(),
            d: eig.d,
            seed: opts.seed,
            mc_draws: opts.mc_draws,
            fve_target: opts.fve,
            null_scale,
            max_tied_fraction: tied,
            tie_warning: tied > TIE_WARNING_FRACTION,
            degenerate: eig.degenerate,
            k: None,
            k_fixed: None,
            sigma2: None,
            output_grid_size: None,
        },
        spectrum: eig,
    })
}

/// Reconstructed curves and the fitted model behind a sparse test.
#[derive(Debug, Clone)]
pub struct SparseFit {
    pub predictor: ScorePredictor,
    pub curves: DenseSample,
}

/// Fits the sparse model and reconstructs every subject on the output grid.
pub fn reconstruct_sparse(sample: &SparseSample, cfg: &SmootherConfig, k: &KChoice) -> Result<SparseFit> {
    let model = fit(sample, cfg, k)?;
    let predictor = ScorePredictor::new(model, sample)?;
    let curves = reconstruct(predictor.model(), &predictor.all_scores(), sample.responses())?;
    Ok(SparseFit { predictor, curves })
}

/// Test on sparse data: the dense test applied to the conditional-expectation
/// reconstructions `X̂_i^K` on the output grid.
pub fn sparse_test(sample: &SparseSample, cfg: &SmootherConfig, k: &KChoice, opts: &TestOptions) -> Result<TestReport> {
    let fitted = reconstruct_sparse(sample, cfg, k)?;
    let mut report = run_dense(&fitted.curves, opts, "T_hat_K")?;
    let model = fitted.predictor.model();
    report.diagnostics.k = Some(model.k);
    report.diagnostics.k_fixed = Some(matches!(k, KChoice::Fixed(_)));
    report.diagnostics.sigma2 = Some(model.sigma2);
    report.diagnostics.output_grid_size = Some(model.grid.len());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_concordance() {
        let grid: Vec<f64> = (0..10).map(|j| j as f64).collect();
        let rows: Vec<Vec<f64>> = (0..30).map(|i| grid.iter().map(|t| i as f64 + t.sin()).collect()).collect();
        let y: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let s = DenseSample::new(&grid, &rows, &y).unwrap();
        let opts = TestOptions { mc_draws: 10_000, alpha: Some(0.05), ..Default::default() };
        let r = dense_test(&s, &opts).unwrap();
        assert!((r.statistic - 0.25).abs() < 1e-12, "{}", r.statistic);
        // every W_i equals (n − 1)/n − 0.5, giving a single weight (4/n)(0.5 − 1/n)²
        assert!(r.p_value < 0.01, "{}", r.p_value);
        assert_eq!(r.spectrum.d, 1);
        assert_eq!(r.reject, Some(true));
    }

    #[test]
    fn constant_projections_are_flagged() {
        // with two subjects every W_i is identically zero
        let s = DenseSample::new(&[0.0, 1.0], &[vec![0.0, 0.0], vec![1.0, 1.0]], &[0.0, 1.0]).unwrap();
        let r = dense_test(&s, &TestOptions { mc_draws: 1000, ..Default::default() }).unwrap();
        assert!(r.diagnostics.degenerate);
        assert_eq!(r.p_value, 1.0);
    }
}
