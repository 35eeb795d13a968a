mod common;

use approx::assert_abs_diff_eq;
use common::{random_fit, rng};
use proptest::prelude::*;
use sepfda::eval::{fitted_kernel, relative_error};
use sepfda::{auc, confusion_metrics, cov_error, make_basis, mean_error, Error, Grid, Mat, MetricReport};

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                den += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

#[test]
fn confusion_counts_and_rates() {
    let flags = [true, true, false, false, true, false, true, false];
    let labels = [true, false, true, false, true, false, false, false];
    let c = confusion_metrics(&flags, &labels).unwrap();
    assert_eq!((c.tp, c.fp, c.tn, c.fn_), (2, 2, 3, 1));
    assert_abs_diff_eq!(c.precision, 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(c.recall, 2.0 / 3.0, epsilon = 1e-15);
    assert_abs_diff_eq!(c.f_score, 4.0 / 7.0, epsilon = 1e-15);

    // nothing flagged and nothing to find
    let c = confusion_metrics(&[false; 4], &[false; 4]).unwrap();
    assert_eq!((c.precision, c.recall, c.f_score, c.tn), (0.0, 0.0, 0.0, 4));
    assert!(matches!(confusion_metrics(&[true, false], &[true]), Err(Error::Shape(_))));
}

#[test]
fn auc_matches_pairwise_count() {
    let scores = [0.3, 1.2, 1.2, 0.1, 5.0, 2.2, 1.2, 0.0];
    let labels = [false, true, false, false, true, true, true, false];
    assert_abs_diff_eq!(auc(&scores, &labels).unwrap(), pairwise_auc(&scores, &labels), epsilon = 1e-15);
    assert_eq!(auc(&[3.0, 2.0, 1.0], &[false, true, true]).unwrap(), 0.0);
    assert!(matches!(auc(&[1.0], &[false]), Err(Error::UndefinedMetric(_))));
    assert!(matches!(auc(&[f64::NAN, 1.0], &[true, false]), Err(Error::InvalidInput(_))));
    assert!(matches!(auc(&[1.0, 2.0], &[true]), Err(Error::Shape(_))));
}

#[test]
fn metric_report_collects_fields() {
    let c = confusion_metrics(&[true, false], &[true, true]).unwrap();
    let r = MetricReport::new(c, Some(0.75));
    assert_eq!((r.tp, r.fn_, r.recall, r.auc), (1, 1, 0.5, Some(0.75)));
    assert_eq!(r.precision, c.precision);
    assert!(r.mean_error.is_none() && r.cov_error.is_none());
    assert_eq!(relative_error(3.0, 2.0), 1.5);
}

#[test]
fn mean_error_cases() {
    let basis = make_basis(0.0, 1.0, 8, 3).unwrap();
    let grid = Grid::uniform(0.0, 1.0, 101).unwrap();
    let mut r = rng(1);
    let fit = random_fit(8, 3, &mut r);
    let on_grid = basis.evaluate(&fit.mean, &grid).unwrap();
    assert_eq!(mean_error(&fit.mean, &on_grid, &basis, &grid).unwrap(), 0.0);

    let shifted = on_grid.map(|v| v + 0.7);
    assert_abs_diff_eq!(mean_error(&fit.mean, &shifted, &basis, &grid).unwrap(), 0.49, epsilon = 1e-12);

    // one coordinate off by t: (1/p) ∫ t² dt = 1/9
    let mut tilted = on_grid.clone();
    let fine = Grid::uniform(0.0, 1.0, 4001).unwrap();
    let mut tilted_fine = basis.evaluate(&fit.mean, &fine).unwrap();
    for (l, &t) in grid.points().iter().enumerate() {
        tilted[(1, l)] += t;
    }
    for (l, &t) in fine.points().iter().enumerate() {
        tilted_fine[(1, l)] += t;
    }
    let coarse = mean_error(&fit.mean, &tilted, &basis, &grid).unwrap();
    let refined = mean_error(&fit.mean, &tilted_fine, &basis, &fine).unwrap();
    assert!((coarse - refined).abs() <= 0.01 * refined);
    assert_abs_diff_eq!(refined, 1.0 / 9.0, epsilon = 1e-7);

    assert!(matches!(mean_error(&fit.mean, &Mat::zeros(3, 50), &basis, &grid), Err(Error::Shape(_))));
}

fn integrated_frobenius(a: &Mat, k: &Mat, b: &Mat, kh: &Mat, grid: &Grid) -> f64 {
    // brute force over every (s, t, i, j) entry of the difference of the two covariance surfaces
    let w = grid.trapezoid_weights();
    let q = grid.len();
    let p = a.rows();
    let mut total = 0.0;
    for s in 0..q {
        for t in 0..q {
            let mut f = 0.0;
            for i in 0..p {
                for j in 0..p {
                    f += (a[(i, j)] * k[(s, t)] - b[(i, j)] * kh[(s, t)]).powi(2);
                }
            }
            total += w[s] * w[t] * f;
        }
    }
    let span = p as f64 * (grid.hi() - grid.lo());
    total / (span * span)
}

#[test]
fn cov_error_cases() {
    let basis = make_basis(0.0, 1.0, 6, 3).unwrap();
    let grid = Grid::uniform(0.0, 1.0, 41).unwrap();
    let mut r = rng(2);
    let fit = random_fit(6, 3, &mut r);
    let kh = fitted_kernel(&fit, &basis, &grid).unwrap();
    let phi = basis.design(&grid).unwrap();
    assert!((&kh - &phi.matmul(&fit.sigma_col).unwrap().matmul(&phi.transpose()).unwrap()).max_abs() < 1e-12);

    let zero = cov_error(&fit, &fit.sigma_row, &kh, &basis, &grid).unwrap();
    assert!(zero.abs() < 1e-12 * kh.max_abs().powi(2));

    // the same covariance written with a different scale split
    let c = 3.5;
    let split = cov_error(&fit, &fit.sigma_row.scale(c), &kh.scale(1.0 / c), &basis, &grid).unwrap();
    assert!(split.abs() < 1e-10 * kh.max_abs().powi(2));

    let doubled = fit.sigma_row.scale(2.0);
    let got = cov_error(&fit, &doubled, &kh, &basis, &grid).unwrap();
    let want = integrated_frobenius(&doubled, &kh, &fit.sigma_row, &kh, &grid);
    assert_abs_diff_eq!(got, want, epsilon = 1e-10 * want);

    let mut r2 = rng(3);
    let other = random_fit(6, 3, &mut r2);
    let k_other = fitted_kernel(&other, &basis, &grid).unwrap();
    let got = cov_error(&fit, &other.sigma_row, &k_other, &basis, &grid).unwrap();
    let want = integrated_frobenius(&other.sigma_row, &k_other, &fit.sigma_row, &kh, &grid);
    assert_abs_diff_eq!(got, want, epsilon = 1e-10 * want);

    assert!(matches!(cov_error(&fit, &Mat::identity(2), &kh, &basis, &grid), Err(Error::Shape(_))));
    assert!(matches!(cov_error(&fit, &fit.sigma_row, &Mat::identity(3), &basis, &grid), Err(Error::Shape(_))));
}

fn scores_and_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (3usize..40).prop_flat_map(|n| {
        (
            proptest::collection::vec(-5i32..5, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            proptest::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn auc_is_rank_based((scores, labels) in scores_and_labels()) {
        let both = labels.iter().any(|&l| l) && labels.iter().any(|&l| !l);
        prop_assume!(both);
        let a = auc(&scores, &labels).unwrap();
        prop_assert!((a - pairwise_auc(&scores, &labels)).abs() < 1e-12);
        let transformed: Vec<f64> = scores.iter().map(|s| (0.3 * s).exp() * 7.0 - 2.0).collect();
        prop_assert!((auc(&transformed, &labels).unwrap() - a).abs() < 1e-12);
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auc(&negated, &labels).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn f_score_between_min_and_max(flags in proptest::collection::vec(any::<bool>(), 1..50), seed in any::<u64>()) {
        let labels: Vec<bool> = flags.iter().enumerate().map(|(i, &f)| f ^ ((seed >> (i % 64)) & 1 == 1)).collect();
        let c = confusion_metrics(&flags, &labels).unwrap();
        prop_assert_eq!(c.tp + c.fp + c.tn + c.fn_, flags.len());
        prop_assert!(c.f_score >= 0.0 && c.f_score <= 1.0);
        if c.f_score > 0.0 {
            prop_assert!(c.f_score <= c.precision.max(c.recall) + 1e-15);
            prop_assert!(c.f_score >= c.precision.min(c.recall) - 1e-15);
        }
    }
}
