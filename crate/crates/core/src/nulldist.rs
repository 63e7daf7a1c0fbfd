//! Monte Carlo approximation of weighted chi-square mixtures `Σ λ_k Z_k²`.
//!
//! Draws are produced in fixed-size shards. Shard `s` uses a ChaCha8 stream
//! keyed by `(seed, s)`, so the concatenated draws depend only on the seed and
//! never on how shards are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Draws per RNG substream.
pub const SHARD_SIZE: usize = 8192;
pub const MIN_DRAWS: usize = 1000;
pub const DEFAULT_DRAWS: usize = 100_000;

/// Seeded sampler for `Σ_k λ_k Z_k²` with independent standard normal `Z_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSampler {
    weights: Vec<f64>,
    draws: usize,
    seed: u64,
}

impl MixtureSampler {
    pub fn new(weights: Vec<f64>, draws: usize, seed: u64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("empty eigenvalue list".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidParameter(format!("mixture weight {w} is not a nonnegative number")));
        }
        if draws < MIN_DRAWS {
            return Err(Error::InvalidParameter(format!("need at least {MIN_DRAWS} draws, got {draws}")));
        }
        Ok(Self { weights, draws, seed })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Whether every weight is zero (the mixture is a point mass at 0).
    pub fn is_degenerate(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    /// All draws, in stream order.
    pub fn sample(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.draws];
        out.par_chunks_mut(SHARD_SIZE).enumerate().for_each(|(shard, chunk)| {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(shard as u64);
            for slot in chunk.iter_mut() {
                *slot = self
                    .weights
                    .iter()
                    .map(|w| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        w * z * z
                    })
                    .sum();
            }
        });
        out
    }

    /// Draws sorted ascending, ready for repeated tail and quantile queries.
    pub fn distribution(&self) -> NullDistribution {
        let mut draws = self.sample();
        draws.sort_by(f64::total_cmp);
        NullDistribution { sorted: draws }
    }

    pub fn p_value(&self, statistic: f64) -> (f64, f64) {
        self.distribution().p_value(statistic)
    }

    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        self.distribution().critical_value(alpha)
    }
}

/// Sorted Monte Carlo draws from a mixture.
#[derive(Debug, Clone)]
pub struct NullDistribution {
    sorted: Vec<f64>,
}

impl NullDistribution {
    pub fn draws(&self) -> &[f64] {
        &self.sorted
    }

    /// Add-one Monte Carlo p-value `(1 + #{draws ≥ s}) / (B + 1)` and its
    /// binomial standard error.
    pub fn p_value(&self, statistic: f64) -> (f64, f64) {
        let b = self.sorted.len();
        let below = self.sorted.partition_point(|&d| d < statistic);
        let p = (1 + b - below) as f64 / (b + 1) as f64;
        let p = p.min(1.0);
        (p, (p * (1.0 - p) / b as f64).sqrt())
    }

    /// Empirical `(1 − α)` quantile: the smallest draw with at least a
    /// `1 − α` share of draws at or below it.
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {alpha} not in (0, 1)")));
        }
        let b = self.sorted.len();
        let rank = ((1.0 - alpha) * b as f64).ceil() as usize;
        Ok(self.sorted[rank.clamp(1, b) - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_samplers() {
        assert!(MixtureSampler::new(vec![], 1000, 1).is_err());
        assert!(MixtureSampler::new(vec![1.0], 999, 1).is_err());
        assert!(MixtureSampler::new(vec![-1.0], 1000, 1).is_err());
    }

    #[test]
    fn zero_weights_give_zero_draws() {
        let s = MixtureSampler::new(vec![0.0], 5000, 3).unwrap();
        assert!(s.sample().iter().all(|&d| d == 0.0));
        assert_eq!(s.critical_value(0.05).unwrap(), 0.0);
    }

    #[test]
    fn p_value_edges() {
        let s = MixtureSampler::new(vec![1.0, 0.5], 2000, 9).unwrap();
        let dist = s.distribution();
        assert_eq!(dist.p_value(0.0).0, 1.0);
        let (p, se) = dist.p_value(1e9);
        assert_eq!(p, 1.0 / 2001.0);
        assert!(se > 0.0);
    }

    #[test]
    fn alpha_out_of_range() {
        let s = MixtureSampler::new(vec![1.0], 1000, 1).unwrap();
        assert!(s.critical_value(0.0).is_err());
        assert!(s.critical_value(1.0).is_err());
    }

    #[test]
    fn same_seed_same_draws() {
        let a = MixtureSampler::new(vec![0.3, 0.1], 20_000, 42).unwrap();
        assert_eq!(a.sample(), a.clone().sample());
        let b = MixtureSampler::new(vec![0.3, 0.1], 20_000, 43).unwrap();
        assert_ne!(a.sample(), b.sample());
    }

    #[test]
    fn draws_do_not_depend_on_thread_count() {
        let s = MixtureSampler::new(vec![0.7, 0.2, 0.1], 50_000, 5).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| s.sample());
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| s.sample());
        assert_eq!(one, four);
    }

    #[test]
    fn truncated_stream_is_a_prefix() {
        let long = MixtureSampler::new(vec![1.0], 3 * SHARD_SIZE, 8).unwrap().sample();
        let short = MixtureSampler::new(vec![1.0], SHARD_SIZE + 10, 8).unwrap().sample();
        assert_eq!(&long[..short.len()], &short[..]);
    }
}
