//! Local linear smoothers with an Epanechnikov kernel, in one and two
//! dimensions, plus k-fold bandwidth selection.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

fn epanechnikov(u: f64) -> f64 {
    if u.abs() < 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Scatter `(t, y)` kept sorted by `t`.
#[derive(Debug, Clone, Default)]
pub(crate) struct Scatter1 {
    t: Vec<f64>,
    y: Vec<f64>,
}

impl Scatter1 {
    pub(crate) fn new(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut pts: Vec<(f64, f64)> = points.into_iter().collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (t, y) = pts.into_iter().unzip();
        Self { t, y }
    }

    /// Local linear estimate at `x0`.
    pub(crate) fn fit_at(&self, x0: f64, h: f64) -> Result<f64> {
        let lo = self.t.partition_point(|&t| t <= x0 - h);
        let hi = self.t.partition_point(|&t| t < x0 + h);
        let (mut s0, mut s1, mut s2, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut used = 0;
        for k in lo..hi {
            let d = self.t[k] - x0;
            let w = epanechnikov(d / h);
            if w <= 0.0 {
                continue;
            }
            used += 1;
            s0 += w;
            s1 += w * d;
            s2 += w * d * d;
            r0 += w * self.y[k];
            r1 += w * d * self.y[k];
        }
        let too_small = Error::BandwidthTooSmall { bandwidth: h, at: x0, needed: 2 };
        if used < 2 {
            return Err(too_small);
        }
        let det = s0 * s2 - s1 * s1;
        // all points at a single time: slope unidentifiable
        if det <= 1e-12 * s0 * s2 || s2 == 0.0 {
            return Err(too_small);
        }
        Ok((s2 * r0 - s1 * r1) / det)
    }

    pub(crate) fn fit_grid(&self, grid: &[f64], h: f64) -> Result<Vec<f64>> {
        grid.iter().map(|&x| self.fit_at(x, h)).collect()
    }
}

/// Scatter `(s, t, z)` kept sorted by `s`. Points sharing both coordinates
/// are merged into one entry holding their count and the sum of their `z`,
/// which leaves every weighted fit unchanged.
#[derive(Debug, Clone, Default)]
pub(crate) struct Scatter2 {
    s: Vec<f64>,
    t: Vec<f64>,
    zsum: Vec<f64>,
    count: Vec<f64>,
}

impl Scatter2 {
    pub(crate) fn new(points: impl IntoIterator<Item = (f64, f64, f64)>) -> Self {
        let mut out = Self::default();
        for (s, t, z, c) in merge_locations(points.into_iter().map(|(s, t, z)| (s, t, z, 1.0))) {
            out.s.push(s);
            out.t.push(t);
            out.zsum.push(z);
            out.count.push(c);
        }
        out
    }

    /// Local linear surface estimate at `(s0, t0)` with a product kernel.
    pub(crate) fn fit_at(&self, s0: f64, t0: f64, h: f64) -> Result<f64> {
        let lo = self.s.partition_point(|&s| s <= s0 - h);
        let hi = self.s.partition_point(|&s| s < s0 + h);
        let mut xtx = Matrix3::<f64>::zeros();
        let mut xtz = Vector3::<f64>::zeros();
        let mut used = 0;
        for k in lo..hi {
            let dt = self.t[k] - t0;
            let wt = epanechnikov(dt / h);
            if wt <= 0.0 {
                continue;
            }
            let ds = self.s[k] - s0;
            let w = wt * epanechnikov(ds / h);
            if w <= 0.0 {
                continue;
            }
            used += 1;
            let x = Vector3::new(1.0, ds, dt);
            xtx += (w * self.count[k]) * x * x.transpose();
            xtz += (w * self.zsum[k]) * x;
        }
        let too_small = Error::BandwidthTooSmall { bandwidth: h, at: s0, needed: 3 };
        if used < 3 {
            return Err(too_small);
        }
        // rescale the slope columns so the conditioning check is unit free
        let scale = Vector3::new(1.0, 1.0 / h, 1.0 / h);
        let scaled = Matrix3::from_fn(|i, j| xtx[(i, j)] * scale[i] * scale[j]);
        let det = scaled.determinant();
        if det.is_nan() || det <= 1e-10 * scaled[(0, 0)].powi(3) {
            return Err(too_small);
        }
        let beta =
            scaled.lu().solve(&xtz.component_mul(&scale)).ok_or_else(|| Error::SingularFit(format!("({s0}, {t0})")))?;
        Ok(beta[0])
    }
}

impl Scatter2 {
    /// Surface value on the diagonal at `(t0, t0)` from a fit in rotated
    /// coordinates `u = (s + t)/2`, `v = t − s`: linear along the diagonal and
    /// quadratic across it, so curvature across the diagonal does not bias
    /// the estimate.
    pub(crate) fn fit_diagonal(&self, t0: f64, h: f64) -> Result<f64> {
        let lo = self.s.partition_point(|&s| s <= t0 - 1.5 * h);
        let hi = self.s.partition_point(|&s| s < t0 + 1.5 * h);
        let mut xtx = Matrix3::<f64>::zeros();
        let mut xtz = Vector3::<f64>::zeros();
        let mut used = 0;
        for k in lo..hi {
            let du = 0.5 * (self.s[k] + self.t[k]) - t0;
            let v = self.t[k] - self.s[k];
            let w = epanechnikov(du / h) * epanechnikov(v / h);
            if w <= 0.0 {
                continue;
            }
            used += 1;
            let x = Vector3::new(1.0, du / h, (v / h).powi(2));
            xtx += (w * self.count[k]) * x * x.transpose();
            xtz += (w * self.zsum[k]) * x;
        }
        let too_small = Error::BandwidthTooSmall { bandwidth: h, at: t0, needed: 3 };
        let det = xtx.determinant();
        if used < 3 || det.is_nan() || det <= 1e-10 * xtx[(0, 0)].powi(3) {
            return Err(too_small);
        }
        let beta = xtx.lu().solve(&xtz).ok_or_else(|| Error::SingularFit(format!("diagonal at {t0}")))?;
        Ok(beta[0])
    }
}

/// Sorts `(s, t, z, weight)` by location and adds up `z` and `weight` over
/// entries that share a location.
pub(crate) fn merge_locations(points: impl IntoIterator<Item = (f64, f64, f64, f64)>) -> Vec<(f64, f64, f64, f64)> {
    let mut pts: Vec<(f64, f64, f64, f64)> = points.into_iter().collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut merged: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        match merged.last_mut() {
            Some(last) if last.0 == p.0 && last.1 == p.1 => {
                last.2 += p.2;
                last.3 += p.3;
            }
            _ => merged.push(p),
        }
    }
    merged
}

/// Geometric grid of `count` candidate bandwidths from `span / 20` to `span / 2`.
pub(crate) fn candidate_bandwidths(span: f64, count: usize) -> Vec<f64> {
    let lo = span / 20.0;
    let hi = span / 2.0;
    let ratio = (hi / lo).powf(1.0 / (count - 1) as f64);
    (0..count).map(|k| lo * ratio.powi(k as i32)).collect()
}

pub(crate) const CV_FOLDS: usize = 5;
pub(crate) const CV_CANDIDATES: usize = 10;

/// Candidates ordered from best to worst k-fold prediction error; bandwidths
/// for which some held-out point cannot be predicted are dropped.
///
/// `fold_fit(fold, h)` returns the squared error summed over that fold's
/// held-out points.
pub(crate) fn rank_bandwidths<F>(candidates: &[f64], fold_fit: F) -> Vec<f64>
where
    F: Fn(usize, f64) -> Result<f64> + Sync,
{
    use rayon::prelude::*;
    let mut scored: Vec<(f64, f64)> = candidates
        .par_iter()
        .filter_map(|&h| {
            let mut total = 0.0;
            for fold in 0..CV_FOLDS {
                total += fold_fit(fold, h).ok()?;
            }
            Some((total, h))
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    scored.into_iter().map(|(_, h)| h).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_signal_is_reproduced() {
        let pts: Vec<(f64, f64)> = (0..40)
            .map(|k| {
                let t = (k as f64 * 0.618).fract();
                (t, 2.0 * t - 1.0)
            })
            .collect();
        let sc = Scatter1::new(pts);
        for x in [0.0, 0.3, 0.77, 1.0] {
            assert!((sc.fit_at(x, 0.2).unwrap() - (2.0 * x - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn narrow_window_is_an_error() {
        let sc = Scatter1::new([(0.0, 1.0), (0.1, 1.0), (0.9, 1.0)]);
        let err = sc.fit_at(0.5, 0.1).unwrap_err();
        assert!(matches!(err, Error::BandwidthTooSmall { at, .. } if at == 0.5));
        // two points at one time do not pin down a slope
        let stacked = Scatter1::new([(0.5, 1.0), (0.5, 2.0)]);
        assert!(stacked.fit_at(0.5, 0.2).is_err());
    }

    #[test]
    fn plane_is_reproduced() {
        let mut pts = Vec::new();
        for a in 0..15 {
            for b in 0..15 {
                let s = a as f64 / 14.0;
                let t = b as f64 / 14.0;
                pts.push((s, t, 1.0 + 2.0 * s - 3.0 * t));
            }
        }
        let sc = Scatter2::new(pts);
        for (s, t) in [(0.0, 0.0), (0.5, 0.25), (1.0, 0.6)] {
            let v = sc.fit_at(s, t, 0.3).unwrap();
            assert!((v - (1.0 + 2.0 * s - 3.0 * t)).abs() < 1e-10, "{v}");
        }
        assert!(sc.fit_at(0.5, 0.5, 0.01).is_err());
    }

    #[test]
    fn rotated_diagonal_ignores_cross_curvature() {
        // strong curvature across the diagonal, linear trend along it
        let mut pts = Vec::new();
        for a in 0..41 {
            for b in 0..41 {
                let s = a as f64 / 40.0;
                let t = b as f64 / 40.0;
                if a != b {
                    pts.push((s, t, 1.0 + 4.0 * (t - s).powi(2) + 0.5 * (s + t)));
                }
            }
        }
        let sc = Scatter2::new(pts);
        for t in [0.3, 0.5, 0.7] {
            assert!((sc.fit_diagonal(t, 0.2).unwrap() - (1.0 + t)).abs() < 1e-10);
        }
    }

    #[test]
    fn repeated_locations_fit_like_their_average() {
        let surface = |s: f64, t: f64| (3.0 * s).sin() + t * t;
        let mut single = Vec::new();
        let mut tripled = Vec::new();
        for a in 0..12 {
            for b in 0..12 {
                let (s, t) = (a as f64 / 11.0, b as f64 / 11.0);
                let z = surface(s, t);
                single.push((s, t, z));
                tripled.extend([(s, t, z + 0.3), (s, t, z - 0.3), (s, t, z)]);
            }
        }
        let (one, three) = (Scatter2::new(single), Scatter2::new(tripled));
        assert_eq!(three.s.len(), 144);
        for (s, t) in [(0.1, 0.9), (0.5, 0.5), (0.95, 0.2)] {
            let (a, b) = (one.fit_at(s, t, 0.25).unwrap(), three.fit_at(s, t, 0.25).unwrap());
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!((one.fit_diagonal(0.5, 0.25).unwrap() - three.fit_diagonal(0.5, 0.25).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn bandwidth_grid_endpoints() {
        let c = candidate_bandwidths(1.0, 10);
        assert!((c[0] - 0.05).abs() < 1e-15);
        assert!((c[9] - 0.5).abs() < 1e-12);
        assert!(c.windows(2).all(|w| w[1] > w[0]));
    }
}
