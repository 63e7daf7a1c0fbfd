//! Rank-based test of association between a scalar response and a
//! functional predictor.
//!
//! For densely observed curves the statistic is `T = ∫ U_n(t)² dt`, where
//! `U_n(t)` is the centred fraction of pairs that are concordant in the
//! response and in `X(t)`. Its null law is approximated by a weighted sum of
//! `χ²₁` variables whose weights come from the spectrum of the Hájek
//! projections. Sparse, irregular observations are first turned into smooth
//! curves by conditional-expectation FPCA ([`pace`]) and then tested the same
//! way.
//!
//! ```
//! use functau::{dense_test, DenseSample, TestOptions};
//!
//! let grid: Vec<f64> = (0..8).map(|j| j as f64 / 7.0).collect();
//! let rows: Vec<Vec<f64>> = (0..12)
//!     .map(|i| grid.iter().map(|t| (i as f64 * 0.7).sin() + t).collect())
//!     .collect();
//! let y: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
//! let sample = DenseSample::new(&grid, &rows, &y).unwrap();
//! let report = dense_test(&sample, &TestOptions { mc_draws: 5000, ..Default::default() }).unwrap();
//! assert!((report.statistic - 0.25).abs() < 1e-12);
//! ```

pub mod concordance;
pub mod domain;
pub mod error;
pub mod io;
pub mod nulldist;
pub mod pace;
pub mod pipeline;
pub mod simgen;

pub use domain::{
    DenseSample, Diagnostics, FpcaModel, Grid, ProjectionSet, SparseSample, Spectrum, Subject, TestReport,
};
pub use error::{Error, Result};
pub use nulldist::MixtureSampler;
pub use pace::{Bandwidth, KChoice, SmootherConfig};
pub use pipeline::{dense_test, sparse_test, TestOptions};
