use functau::concordance::{
    concordant_pairs, concordant_pairs_naive, gram_eigenvalues, operator_eigenvalues, projections, spectrum,
    statistic_t, u_curve, u_curve_fast,
};
use functau::{DenseSample, MixtureSampler};
use proptest::prelude::*;

/// Integer-valued sample so that monotone maps and shifts stay exact.
fn sample_strategy(max_n: usize, max_m: usize, levels: i32) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (2..=max_n, 2..=max_m).prop_flat_map(move |(n, m)| {
        let value = (-levels..=levels).prop_map(f64::from);
        (prop::collection::vec(prop::collection::vec(value.clone(), m), n), prop::collection::vec(value, n))
    })
}

fn build(rows: &[Vec<f64>], y: &[f64]) -> DenseSample {
    let m = rows[0].len();
    let grid: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
    DenseSample::new(&grid, rows, y).unwrap()
}

fn stretch(v: f64) -> f64 {
    v * v * v + 5.0 * v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fast_counts_match_naive((rows, y) in sample_strategy(40, 6, 4)) {
        let s = build(&rows, &y);
        prop_assert_eq!(u_curve_fast(&s), u_curve(&s));
        for j in 0..s.m() {
            let x = s.column(j);
            prop_assert_eq!(concordant_pairs(&y, &x), concordant_pairs_naive(&y, &x));
        }
    }

    #[test]
    fn fast_counts_match_naive_on_continuous_data(
        y in prop::collection::vec(-1e3f64..1e3, 2..60),
        seed in any::<u64>(),
    ) {
        let x: Vec<f64> = y.iter().enumerate().map(|(i, v)| ((i as u64 ^ seed) % 97) as f64 * 0.37 - v * 1e-3).collect();
        prop_assert_eq!(concordant_pairs(&y, &x), concordant_pairs_naive(&y, &x));
    }

    #[test]
    fn projection_mean_identity((rows, y) in sample_strategy(30, 8, 6)) {
        let s = build(&rows, &y);
        let u = u_curve_fast(&s);
        let w = projections(&s);
        let n = s.n() as f64;
        for (j, &uj) in u.iter().enumerate() {
            let mean = (0..s.n()).map(|i| w.row(i)[j]).sum::<f64>() / n;
            prop_assert!((mean - ((n - 1.0) * uj - 0.5) / n).abs() <= 1e-12);
        }
    }

    #[test]
    fn spectrum_trace_identity((rows, y) in sample_strategy(30, 12, 6)) {
        let s = build(&rows, &y);
        let w = projections(&s);
        let grid = s.grid();
        let direct = (0..w.n()).map(|i| grid.inner(w.row(i), w.row(i))).sum::<f64>() / w.n() as f64;
        let eig = spectrum(&w, 1.0).unwrap();
        prop_assert!((eig.eigenvalues.iter().sum::<f64>() - direct).abs() <= 1e-10);
    }

    #[test]
    fn gram_and_operator_spectra_agree((rows, y) in sample_strategy(25, 25, 8)) {
        let w = projections(&build(&rows, &y));
        let gram = gram_eigenvalues(&w);
        let op = operator_eigenvalues(&w);
        for k in 0..gram.len().min(op.len()) {
            prop_assert!((gram[k] - op[k]).abs() <= 1e-10, "{} vs {}", gram[k], op[k]);
        }
        // the larger form only adds zeros
        let tail = if gram.len() > op.len() { &gram[op.len()..] } else { &op[gram.len()..] };
        prop_assert!(tail.iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn spectrum_is_sorted_and_nonnegative((rows, y) in sample_strategy(30, 10, 5), fve in 0.05f64..=1.0) {
        let eig = spectrum(&projections(&build(&rows, &y)), fve).unwrap();
        prop_assert!(eig.eigenvalues.iter().all(|&v| v >= 0.0));
        prop_assert!(eig.eigenvalues.windows(2).all(|p| p[0] >= p[1]));
        prop_assert!(eig.d >= 1 && eig.d <= eig.eigenvalues.len().max(1));
        if !eig.degenerate {
            let total: f64 = eig.eigenvalues.iter().sum();
            let short: f64 = eig.eigenvalues[..eig.d - 1].iter().sum();
            prop_assert!(short < fve * total * (1.0 - 1e-12));
        }
    }

    #[test]
    fn monotone_maps_change_nothing((rows, y) in sample_strategy(30, 6, 5)) {
        let s = build(&rows, &y);
        let y2: Vec<f64> = y.iter().map(|&v| stretch(v)).collect();
        let rows2: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| stretch(v) - 3.0).collect()).collect();
        let t = build(&rows2, &y2);
        prop_assert_eq!(u_curve_fast(&s), u_curve_fast(&t));
        let (ws, wt) = (projections(&s), projections(&t));
        prop_assert_eq!(ws.values(), wt.values());
        prop_assert_eq!(spectrum(&projections(&s), 0.95).unwrap(), spectrum(&projections(&t), 0.95).unwrap());
    }

    #[test]
    fn affine_curve_maps_change_nothing((rows, y) in sample_strategy(30, 6, 5), k in -3i32..4, b in -100i32..100) {
        let s = build(&rows, &y);
        let a = 2f64.powi(k);
        let rows2: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| a * v + f64::from(b)).collect()).collect();
        let t = build(&rows2, &y);
        let (us, ut) = (u_curve_fast(&s), u_curve_fast(&t));
        prop_assert_eq!(&us, &ut);
        prop_assert_eq!(statistic_t(&us, s.grid()).unwrap(), statistic_t(&ut, t.grid()).unwrap());
    }

    #[test]
    fn joint_permutation_changes_nothing((rows, y) in sample_strategy(30, 6, 5), rot in 0usize..30) {
        let s = build(&rows, &y);
        let n = y.len();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
        let rows2: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let y2: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let t = build(&rows2, &y2);
        let us = u_curve_fast(&s);
        prop_assert_eq!(&us, &u_curve_fast(&t));
        prop_assert_eq!(statistic_t(&us, s.grid()).unwrap(), statistic_t(&us, t.grid()).unwrap());
        let (ws, wt) = (projections(&s), projections(&t));
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(ws.row(i), wt.row(k));
        }
        let (a, b) = (spectrum(&ws, 0.95).unwrap(), spectrum(&wt, 0.95).unwrap());
        prop_assert_eq!(a.d, b.d);
        for (x, z) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            prop_assert!((x - z).abs() <= 1e-12);
        }
    }

    #[test]
    fn reversing_the_response_flips_u(
        n in 2usize..40,
        m in 2usize..6,
        seed in any::<u64>(),
    ) {
        // distinct values everywhere, so no pair is tied
        let y: Vec<f64> = (0..n).map(|i| ((i as u64).wrapping_mul(seed | 1) % 1_000_003) as f64 + i as f64 * 1e-3).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..m).map(|j| (((i * 31 + j * 7) as u64 ^ seed) % 1_000_003) as f64 / 1e6 + i as f64 * 1e-9).collect()).collect();
        let s = build(&rows, &y);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let t = build(&rows, &neg);
        let (us, ut) = (u_curve_fast(&s), u_curve_fast(&t));
        for (a, b) in us.iter().zip(&ut) {
            prop_assert!((a + b).abs() <= 1e-15);
        }
        let (ts, tt) = (statistic_t(&us, s.grid()).unwrap(), statistic_t(&ut, t.grid()).unwrap());
        prop_assert!((ts - tt).abs() <= 1e-15);
    }

    #[test]
    fn u_and_w_stay_in_range((rows, y) in sample_strategy(30, 6, 3)) {
        let s = build(&rows, &y);
        prop_assert!(u_curve_fast(&s).iter().all(|u| (-0.5..=0.5).contains(u)));
        let w = projections(&s);
        prop_assert!(w.values().iter().all(|w| (-0.5..=0.5).contains(w)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn p_value_is_monotone(
        weights in prop::collection::vec(0.0f64..2.0, 1..5),
        seed in any::<u64>(),
        a in 0.0f64..10.0,
        b in 0.0f64..10.0,
    ) {
        let sampler = MixtureSampler::new(weights, 2000, seed).unwrap();
        let null = sampler.distribution();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(null.p_value(lo).0 >= null.p_value(hi).0);
        let (p, _) = null.p_value(hi);
        prop_assert!(p > 0.0 && p <= 1.0);
    }

    #[test]
    fn critical_value_is_monotone_in_alpha(seed in any::<u64>(), a in 0.001f64..0.999, b in 0.001f64..0.999) {
        let null = MixtureSampler::new(vec![1.0, 0.4], 2000, seed).unwrap().distribution();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(null.critical_value(lo).unwrap() >= null.critical_value(hi).unwrap());
    }
}
