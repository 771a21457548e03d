use approx::assert_relative_eq;
use proptest::prelude::*;

use lawlab_core::configspace::greedy_cover;
use lawlab_core::lawlab::kmin_estimate;
use lawlab_core::measures::{make_gaussian_mixture, split};
use lawlab_core::numkit::ols_fit;
use lawlab_core::surrogates::{mmd, w1_1d};
use lawlab_core::{LabeledPoint, LawFit, RngStream, WeightedDataset};

fn euclid(pts: &[(f64, f64)]) -> Vec<Vec<f64>> {
    pts.iter()
        .map(|p| pts.iter().map(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()).collect())
        .collect()
}

fn weighted(xs: &[f64], ws: &[f64]) -> Vec<(f64, f64)> {
    let total: f64 = ws.iter().sum();
    xs.iter().zip(ws).map(|(x, w)| (*x, w / total)).collect()
}

fn cloud(xs: &[(f64, f64)]) -> WeightedDataset {
    WeightedDataset::uniform(xs.iter().map(|p| LabeledPoint::new(vec![p.0, p.1], 0)).collect(), 1).unwrap()
}

proptest! {
    #[test]
    fn fork_ignores_parent_draws(seed in any::<u64>(), draws in 0usize..20, label in "[a-z]{1,8}") {
        let fresh = RngStream::new(seed);
        let mut used = RngStream::new(seed);
        for _ in 0..draws {
            used.uniform();
        }
        let (mut a, mut b) = (fresh.fork(&label), used.fork(&label));
        for _ in 0..5 {
            prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn ols_recovers_exact_lines(slope in -5.0f64..5.0, intercept in -5.0f64..5.0,
                                xs in prop::collection::vec(-10.0f64..10.0, 3..20)) {
        prop_assume!(xs.iter().any(|x| (x - xs[0]).abs() > 1e-3));
        let ys: Vec<f64> = xs.iter().map(|x| slope * x + intercept).collect();
        let fit = ols_fit(&xs, &ys).unwrap();
        assert_relative_eq!(fit.slope, slope, epsilon = 1e-8);
        assert_relative_eq!(fit.intercept, intercept, epsilon = 1e-8);
        prop_assert!(fit.r_squared > 1.0 - 1e-9);
    }

    #[test]
    fn cover_is_a_valid_monotone_cover(pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..14),
                                       r1 in 0.0f64..1.5, r2 in 0.0f64..1.5) {
        let d = euclid(&pts);
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let a = greedy_cover(&d, lo).unwrap();
        let b = greedy_cover(&d, hi).unwrap();
        prop_assert!(b.n_r <= a.n_r);
        for c in [&a, &b] {
            prop_assert!(c.n_r >= 1 && c.n_r <= pts.len());
            prop_assert_eq!(c.centers.len(), c.n_r);
            for (i, &ctr) in c.assignment.iter().enumerate() {
                prop_assert!(c.centers.contains(&ctr));
                prop_assert!(d[i][ctr] <= c.radius);
            }
        }
    }

    #[test]
    fn w1_is_a_metric(xs in prop::collection::vec(-5.0f64..5.0, 1..10),
                      ys in prop::collection::vec(-5.0f64..5.0, 1..10),
                      zs in prop::collection::vec(-5.0f64..5.0, 1..10)) {
        let (a, b, c) = (
            weighted(&xs, &vec![1.0; xs.len()]),
            weighted(&ys, &vec![1.0; ys.len()]),
            weighted(&zs, &vec![1.0; zs.len()]),
        );
        prop_assert!(w1_1d(&a, &a).abs() < 1e-12);
        assert_relative_eq!(w1_1d(&a, &b), w1_1d(&b, &a), epsilon = 1e-12);
        prop_assert!(w1_1d(&a, &c) <= w1_1d(&a, &b) + w1_1d(&b, &c) + 1e-10);
    }

    #[test]
    fn w1_translation(xs in prop::collection::vec(-5.0f64..5.0, 1..10), shift in -3.0f64..3.0) {
        let a = weighted(&xs, &vec![1.0; xs.len()]);
        let b: Vec<(f64, f64)> = a.iter().map(|&(x, w)| (x + shift, w)).collect();
        assert_relative_eq!(w1_1d(&a, &b), shift.abs(), epsilon = 1e-9);
    }

    #[test]
    fn mmd_symmetric_nonnegative(xs in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..8),
                                 ys in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..8),
                                 sigma in 0.2f64..3.0) {
        let (a, b) = (cloud(&xs), cloud(&ys));
        let ab = mmd(&a, &b, sigma, false).unwrap();
        prop_assert!(ab >= 0.0);
        assert_relative_eq!(ab, mmd(&b, &a, sigma, false).unwrap(), epsilon = 1e-12);
        prop_assert!(mmd(&a, &a, sigma, true).unwrap() < 1e-7);
    }

    #[test]
    fn kmin_grows_with_log_m(slope in 0.01f64..3.0, intercept in -0.1f64..0.1, gap in 0.01f64..1.0,
                             l1 in 0.0f64..5.0, l2 in 0.0f64..5.0) {
        let fit = LawFit { slope, intercept, r_squared: 1.0, n_points: 4 };
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        prop_assert!(kmin_estimate(&fit, intercept + gap, lo).unwrap() <= kmin_estimate(&fit, intercept + gap, hi).unwrap());
    }

    #[test]
    fn split_partitions_each_class(seed in any::<u64>(), n in 4usize..40, frac in 0.2f64..0.8) {
        let ds = make_gaussian_mixture(3, 2, n, 2.0, 1.0, &RngStream::new(seed)).unwrap();
        let (a, b) = split(&ds, frac, &RngStream::new(seed ^ 1)).unwrap();
        let (ia, ib) = (a.class_indices(), b.class_indices());
        for c in 0..3 {
            prop_assert_eq!(ia[c].len() + ib[c].len(), n);
            prop_assert_eq!(ia[c].len(), (frac * n as f64).round() as usize);
        }
    }
}
