//! Pointwise concordance curve `U_n(t)`, the statistic `T = ‖U_n‖²`, the
//! Hájek projections `W_i(t)` and the spectrum of their covariance operator.
//!
//! A pair `(i, j)` is concordant at `t` when `(Y_i − Y_j)(X_i(t) − X_j(t)) > 0`.
//! Ties in either coordinate make the product zero, so tied pairs never count.
//! Counts are kept as integers and centred only at the end, which is why the
//! naive and the `O(n log n)` paths agree bit for bit.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::domain::{DenseSample, Grid, ProjectionSet, Spectrum};
use crate::error::{Error, Result};

/// Fraction of tied pairs above which the report raises a tie warning.
pub const TIE_WARNING_FRACTION: f64 = 0.05;

fn pairs(n: usize) -> u64 {
    let n = n as u64;
    n * (n - 1) / 2
}

fn centre(concordant: u64, n: usize) -> f64 {
    concordant as f64 / pairs(n) as f64 - 0.5
}

/// Number of concordant pairs by direct enumeration.
pub fn concordant_pairs_naive(y: &[f64], x: &[f64]) -> u64 {
    let n = y.len();
    let mut count = 0;
    for i in 0..n {
        for j in i + 1..n {
            // sign comparison: the product of two tiny gaps can underflow to zero
            if (y[i] > y[j] && x[i] > x[j]) || (y[i] < y[j] && x[i] < x[j]) {
                count += 1;
            }
        }
    }
    count
}

/// Fenwick tree over dense ranks.
struct Fenwick(Vec<u32>);

impl Fenwick {
    fn new(size: usize) -> Self {
        Self(vec![0; size + 1])
    }

    fn add(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks strictly below `rank`.
    fn below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut s = 0u64;
        while i > 0 {
            s += u64::from(self.0[i]);
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Dense ranks (ties share a rank) and the number of distinct values.
fn dense_ranks(x: &[f64]) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0; x.len()];
    let mut r = 0;
    for w in 0..order.len() {
        if w > 0 && x[order[w]] != x[order[w - 1]] {
            r += 1;
        }
        ranks[order[w]] = r;
    }
    (ranks, if x.is_empty() { 0 } else { r + 1 })
}

/// Subjects grouped by equal response, groups in ascending response order.
fn response_groups(y: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if y[g[0]] == y[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Concordant pairs in `O(n log n)`: walk subjects in increasing `Y`, counting
/// earlier subjects with strictly smaller `X`. Members of a `Y`-tie group are
/// queried before any of them is inserted, so tied responses never pair.
fn concordant_pairs_grouped(groups: &[Vec<usize>], x: &[f64]) -> u64 {
    let (ranks, distinct) = dense_ranks(x);
    let mut tree = Fenwick::new(distinct);
    let mut count = 0;
    for g in groups {
        for &i in g {
            count += tree.below(ranks[i]);
        }
        for &i in g {
            tree.add(ranks[i]);
        }
    }
    count
}

/// Number of concordant pairs, `O(n log n)`.
pub fn concordant_pairs(y: &[f64], x: &[f64]) -> u64 {
    concordant_pairs_grouped(&response_groups(y), x)
}

/// `U_n(t_j)` at every grid point by direct pair enumeration.
pub fn u_curve(sample: &DenseSample) -> Vec<f64> {
    let y = sample.responses();
    (0..sample.m()).map(|j| centre(concordant_pairs_naive(y, &sample.column(j)), sample.n())).collect()
}

/// `U_n(t_j)` at every grid point; same values as [`u_curve`].
pub fn u_curve_fast(sample: &DenseSample) -> Vec<f64> {
    let groups = response_groups(sample.responses());
    (0..sample.m()).map(|j| centre(concordant_pairs_grouped(&groups, &sample.column(j)), sample.n())).collect()
}

/// `T = ∫ U_n(t)² dt` by the trapezoid rule.
pub fn statistic_t(u: &[f64], grid: &Grid) -> Result<f64> {
    if u.len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), found: u.len() });
    }
    Ok(grid.inner(u, u).max(0.0))
}

/// Per-subject concordant partner counts at one grid point.
fn partner_counts(groups: &[Vec<usize>], x: &[f64]) -> Vec<u64> {
    let (ranks, distinct) = dense_ranks(x);
    let mut counts = vec![0u64; x.len()];

    // partners with smaller Y and smaller X
    let mut tree = Fenwick::new(distinct);
    for g in groups {
        for &i in g {
            counts[i] += tree.below(ranks[i]);
        }
        for &i in g {
            tree.add(ranks[i]);
        }
    }

    // partners with larger Y and larger X
    let mut tree = Fenwick::new(distinct);
    let mut inserted = 0u64;
    for g in groups.iter().rev() {
        for &i in g {
            counts[i] += inserted - tree.below(ranks[i] + 1);
        }
        for &i in g {
            tree.add(ranks[i]);
            inserted += 1;
        }
    }
    counts
}

/// Hájek projections `W_i(t) = n⁻¹ Σ_j 𝟙[(Y_i − Y_j)(X_i(t) − X_j(t)) > 0] − 0.5`.
pub fn projections(sample: &DenseSample) -> ProjectionSet {
    let n = sample.n();
    let m = sample.m();
    let groups = response_groups(sample.responses());
    let mut values = vec![0.0; n * m];
    for j in 0..m {
        let counts = partner_counts(&groups, &sample.column(j));
        for (i, c) in counts.into_iter().enumerate() {
            values[i * m + j] = c as f64 / n as f64 - 0.5;
        }
    }
    ProjectionSet { grid: sample.grid().clone(), values, n }
}

/// `W_i(t) √w(t)` as an `n × m` matrix, so that inner products become dot products.
fn weighted_projections(proj: &ProjectionSet) -> DMatrix<f64> {
    let m = proj.grid.len();
    let sw: Vec<f64> = proj.grid.trapezoid_weights().iter().map(|w| w.sqrt()).collect();
    DMatrix::from_fn(proj.n, m, |i, j| proj.values[i * m + j] * sw[j])
}

fn sorted_eigenvalues(mat: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(mat).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Eigenvalues of the `n × n` Gram matrix `M_ij = n⁻¹ ⟨W_i, W_j⟩`.
pub fn gram_eigenvalues(proj: &ProjectionSet) -> Vec<f64> {
    let a = weighted_projections(proj);
    let gram = (&a * a.transpose()) / proj.n as f64;
    sorted_eigenvalues(gram)
}

/// Eigenvalues of the grid-discretised operator `n⁻¹ Q^{1/2} Wᵀ W Q^{1/2}`
/// (`m × m`). Its nonzero spectrum equals that of the Gram matrix.
pub fn operator_eigenvalues(proj: &ProjectionSet) -> Vec<f64> {
    let a = weighted_projections(proj);
    let op = (a.transpose() * &a) / proj.n as f64;
    sorted_eigenvalues(op)
}

/// Spectrum of `C_w(x) = n⁻¹ Σ ⟨W_i, x⟩ W_i`, truncated at `fve_target`.
///
/// The eigenproblem is solved in whichever of the two equivalent forms is
/// smaller (`n × n` Gram or `m × m` gridded operator).
pub fn spectrum(proj: &ProjectionSet, fve_target: f64) -> Result<Spectrum> {
    if !(fve_target > 0.0 && fve_target <= 1.0) {
        return Err(Error::InvalidParameter(format!("fve target {fve_target} not in (0, 1]")));
    }
    if proj.values.iter().all(|&w| w == 0.0) {
        return Spectrum::from_eigenvalues(Vec::new(), fve_target);
    }
    let ev = if proj.n <= proj.grid.len() { gram_eigenvalues(proj) } else { operator_eigenvalues(proj) };
    Spectrum::from_eigenvalues(ev, fve_target)
}

/// Largest fraction of pairs tied in `Y` or in `X(t)`, over grid points.
pub fn max_tied_fraction(sample: &DenseSample) -> f64 {
    let y = sample.responses();
    let total = pairs(sample.n()) as f64;
    (0..sample.m())
        .map(|j| {
            let x = sample.column(j);
            let tied_y = tied_pairs(y.iter().copied());
            let tied_x = tied_pairs(x.iter().copied());
            let tied_both = tied_pairs_joint(y, &x);
            (tied_y + tied_x - tied_both) as f64 / total
        })
        .fold(0.0, f64::max)
}

fn tied_pairs(values: impl Iterator<Item = f64>) -> u64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    count_runs(&v, |a, b| a == b)
}

fn tied_pairs_joint(y: &[f64], x: &[f64]) -> u64 {
    let mut v: Vec<(f64, f64)> = y.iter().copied().zip(x.iter().copied()).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    count_runs(&v, |a, b| a == b)
}

fn count_runs<T>(sorted: &[T], eq: impl Fn(&T, &T) -> bool) -> u64 {
    let mut total = 0;
    let mut run = 1u64;
    for w in 1..=sorted.len() {
        if w < sorted.len() && eq(&sorted[w], &sorted[w - 1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total
}
