#![allow(clippy::needless_range_loop)]

mod common;

use approx::assert_abs_diff_eq;
use common::{gaussian_matrix, kolmogorov_distance, perturbed, quad_inv, random_spd, rng};
use proptest::prelude::*;
use rand::Rng;
use sepfda::fmodel::fmmd2_from_model;
use sepfda::fpca::separable_fpca_with_gram;
use sepfda::{
    chi2_cutoff, flag_outliers, fmd2, fmmd2_coef, fmmd2_spectral, make_basis, sample_matrix_normal, scores,
    separable_fpca, Basis, Error, Mat, SeparableFit,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn fit_for(basis: &Basis, p: usize, rng: &mut impl Rng) -> SeparableFit<f64> {
    let m = basis.size();
    SeparableFit::new(gaussian_matrix(m, p, rng), random_spd(p, 0.3, rng), random_spd(m, 0.3, rng)).unwrap()
}

#[test]
fn spectral_route_equals_coefficient_route() {
    let mut r = rng(1);
    for trial in 0..40 {
        let m = 4 + trial % 5;
        let p = 1 + trial % 5;
        let b = make_basis(0.0, 1.0 + trial as f64 * 0.1, m, 3.min(m - 1)).unwrap();
        let fit = fit_for(&b, p, &mut r);
        let a = perturbed(&fit, &mut r);
        let c = fmmd2_coef(&a, &fit).unwrap();
        let s = fmmd2_spectral(&a, &fit, &b, m * p).unwrap();
        assert!((c - s).abs() <= 1e-8 * (1.0 + c), "{c} vs {s}");
    }
}

#[test]
fn coefficient_route_special_cases() {
    let mut r = rng(2);
    let b = make_basis(0.0, 1.0, 5, 3).unwrap();
    let fit = fit_for(&b, 2, &mut r);
    assert_eq!(fmmd2_coef(&fit.mean, &fit).unwrap(), 0.0);
    let id = SeparableFit::new(Mat::zeros(5, 2), Mat::identity(2), Mat::identity(5)).unwrap();
    let a = gaussian_matrix(5, 2, &mut r);
    assert_abs_diff_eq!(fmmd2_coef(&a, &id).unwrap(), a.frobenius_norm().powi(2), epsilon = 1e-12);
}

#[test]
fn single_component_distance_by_hand() {
    let mut r = rng(3);
    let b = make_basis(0.0, 1.0, 6, 3).unwrap();
    let fit = fit_for(&b, 3, &mut r);
    let model = separable_fpca(&fit, &b, 18).unwrap();
    let (i, j) = model.order[0];
    // A - M = s · b_i v_j'
    let bi = model.kernel_coefs.column(i);
    let vj = model.row_vectors.column(j);
    let s = 2.5;
    let a = &fit.mean + &Mat::from_fn(6, 3, |r_, c_| s * bi[r_] * vj[c_]);
    let d = fmmd2_spectral(&a, &fit, &b, 1).unwrap();
    let pi = model.kernel_values[i] * model.row_values[j];
    assert_abs_diff_eq!(model.product_values[0], pi, epsilon = 1e-12 * pi);
    assert_abs_diff_eq!(d, s * s / pi, epsilon = 1e-9 * d);
    // the same sample has no weight on any other component
    let full = fmmd2_spectral(&a, &fit, &b, 18).unwrap();
    assert_abs_diff_eq!(full, d, epsilon = 1e-9 * d);
}

#[test]
fn truncation_errors() {
    let mut r = rng(4);
    let b = make_basis(0.0, 1.0, 5, 3).unwrap();
    let fit = fit_for(&b, 2, &mut r);
    let a = perturbed(&fit, &mut r);
    assert!(matches!(fmmd2_spectral(&a, &fit, &b, 0), Err(Error::Truncation { .. })));
    assert!(matches!(fmmd2_spectral(&a, &fit, &b, 11), Err(Error::Truncation { .. })));
    assert!(matches!(fmd2(&[0.0; 5], &[0.0; 5], &fit.sigma_col, &b, 6), Err(Error::Truncation { .. })));
}

#[test]
fn diagonal_row_covariance_splits_into_univariate_distances() {
    let mut r = rng(5);
    let b = make_basis(0.0, 2.0, 7, 3).unwrap();
    let col = random_spd(7, 0.2, &mut r);
    let row = Mat::from_diag(&[0.5, 2.0, 0.5]);
    let fit = SeparableFit::new(gaussian_matrix(7, 3, &mut r), row, col).unwrap();
    let a = perturbed(&fit, &mut r);
    let total = fmmd2_coef(&a, &fit).unwrap();
    let mut sum = 0.0;
    for j in 0..3 {
        let u = fmd2(&a.column(j), &fit.mean.column(j), &fit.sigma_col, &b, 7).unwrap();
        sum += u / fit.sigma_row[(j, j)];
    }
    assert_abs_diff_eq!(total, sum, epsilon = 1e-9 * total);
}

#[test]
fn block_diagonal_row_covariance_is_additive() {
    let mut r = rng(6);
    let b = make_basis(0.0, 1.0, 5, 3).unwrap();
    let col = random_spd(5, 0.2, &mut r);
    let blk = random_spd(2, 0.3, &mut r);
    let mut row = Mat::zeros(3, 3);
    for i in 0..2 {
        for j in 0..2 {
            row[(i, j)] = blk[(i, j)];
        }
    }
    row[(2, 2)] = 1.7;
    let fit = SeparableFit::new(gaussian_matrix(5, 3, &mut r), row, col).unwrap();
    let a = perturbed(&fit, &mut r);
    let total = fmmd2_spectral(&a, &fit, &b, 15).unwrap();
    let sub = |cols: &[usize]| {
        let rowb = fit.sigma_row.select_rows(cols).select_cols(cols);
        let f = SeparableFit::new(fit.mean.select_cols(cols), rowb, fit.sigma_col.clone()).unwrap();
        fmmd2_coef(&a.select_cols(cols), &f).unwrap()
    };
    assert_abs_diff_eq!(total, sub(&[0, 1]) + sub(&[2]), epsilon = 1e-9 * total);
}

#[test]
fn univariate_distance_identities() {
    let mut r = rng(7);
    let b = make_basis(0.0, 1.0, 6, 3).unwrap();
    let sigma = random_spd(6, 0.2, &mut r);
    let mean: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
    let a: Vec<f64> = (0..6).map(|_| r.random_range(-3.0..3.0)).collect();
    let d: Vec<f64> = a.iter().zip(&mean).map(|(x, y)| x - y).collect();
    let full = fmd2(&a, &mean, &sigma, &b, 6).unwrap();
    assert_abs_diff_eq!(full, quad_inv(&d, &sigma), epsilon = 1e-10 * (1.0 + full));
    assert_eq!(fmd2(&mean, &mean, &sigma, &b, 3).unwrap(), 0.0);
    let mut prev = 0.0;
    for k in 1..=6 {
        let v = fmd2(&a, &mean, &sigma, &b, k).unwrap();
        assert!(v >= prev);
        prev = v;
    }
}

#[test]
fn cutoffs_and_flags() {
    assert_abs_diff_eq!(chi2_cutoff(2, 1.0 - (-1f64).exp()).unwrap(), 2.0, epsilon = 1e-10);
    assert_abs_diff_eq!(chi2_cutoff(1, 0.99).unwrap(), 6.6349, epsilon = 5e-5);
    let mut prev = 0.0;
    for q in [0.9, 0.99, 0.999, 0.9999, 1.0 - 1e-8, 1.0 - 1e-12] {
        let c = chi2_cutoff(7, q).unwrap();
        assert!(c > prev);
        prev = c;
    }
    for dof in [1usize, 3, 15, 30, 100] {
        for q in [0.01, 0.5, 0.9, 0.99, 0.999] {
            let want = ChiSquared::new(dof as f64).unwrap().inverse_cdf(q);
            assert_abs_diff_eq!(chi2_cutoff(dof, q).unwrap(), want, epsilon = 1e-8);
        }
    }
    assert!(flag_outliers(&[], 3, 0.99).unwrap().is_empty());
    let c = chi2_cutoff(15, 0.99).unwrap();
    let res = flag_outliers(&[c, c + 1e-9, 1.0], 15, 0.99).unwrap();
    assert_eq!(res.iter().map(|d| d.flag).collect::<Vec<_>>(), vec![false, true, false]);
    assert!(res.iter().all(|d| d.cutoff == c && d.truncation == 15));
    assert!(matches!(flag_outliers(&[-0.1], 2, 0.9), Err(Error::InvalidInput(_))));
}

#[test]
fn chi_square_law_and_flag_rate() {
    let mut r = rng(8);
    let b = make_basis(0.0, 1.0, 5, 3).unwrap();
    let fit = fit_for(&b, 3, &mut r);
    let n = 5000;
    let d: Vec<f64> = (0..n).map(|_| fmmd2_coef(&sample_matrix_normal(&fit, &mut r).unwrap(), &fit).unwrap()).collect();
    let chi = ChiSquared::new(15.0).unwrap();
    let ks = kolmogorov_distance(&d, |x| chi.cdf(x));
    assert!(ks <= 1.63 / (n as f64).sqrt(), "KS {ks}");
    let flagged = flag_outliers(&d, 15, 0.99).unwrap().iter().filter(|x| x.flag).count() as f64 / n as f64;
    assert!((flagged - 0.01).abs() <= 3.0 * (0.0099 / n as f64).sqrt(), "{flagged}");
}

#[test]
fn affine_invariance() {
    let mut r = rng(9);
    let b = make_basis(0.0, 1.0, 6, 3).unwrap();
    for _ in 0..20 {
        let fit = fit_for(&b, 3, &mut r);
        let a = perturbed(&fit, &mut r);
        let g = gaussian_matrix(3, 3, &mut r);
        let shift = gaussian_matrix(6, 3, &mut r);
        let tf = |x: &Mat| &x.matmul_t(&g).unwrap() + &shift;
        let row = g.matmul(&fit.sigma_row).unwrap().matmul_t(&g).unwrap();
        let mut row = row;
        row.symmetrize();
        let moved = SeparableFit::new(tf(&fit.mean), row, fit.sigma_col.clone()).unwrap();
        let d0 = fmmd2_coef(&a, &fit).unwrap();
        let d1 = fmmd2_coef(&tf(&a), &moved).unwrap();
        assert!((d0 - d1).abs() <= 1e-8 * (1.0 + d0), "{d0} vs {d1}");
    }
}

#[test]
fn whitened_kernel_and_multiplicities() {
    let mut r = rng(10);
    let b = make_basis(0.0, 1.0, 5, 3).unwrap();
    let w = b.gram();
    let winv = sepfda::spd_inverse(&w).unwrap();
    let fit = SeparableFit::new(Mat::zeros(5, 2), Mat::identity(2), winv).unwrap();
    let model = separable_fpca(&fit, &b, 10).unwrap();
    for &l in &model.kernel_values {
        assert_abs_diff_eq!(l, 1.0, epsilon = 1e-9);
    }
    let wih = sepfda::numerics::sym_inv_sqrt(&w).unwrap();
    // the eigenbasis is not unique for a repeated eigenvalue; compare the spanned projector
    let proj = model.kernel_coefs.matmul_t(&model.kernel_coefs).unwrap();
    let want = wih.matmul(&wih).unwrap();
    assert!((&proj - &want).max_abs() <= 1e-8 * want.max_abs());

    let fit = SeparableFit::new(Mat::zeros(5, 3), Mat::identity(3), random_spd(5, 0.2, &mut r)).unwrap();
    let model = separable_fpca(&fit, &b, 15).unwrap();
    for k in 0..5 {
        for j in 0..3 {
            assert_eq!(model.order[3 * k + j], (k, j));
        }
        assert_abs_diff_eq!(model.product_values[3 * k], model.product_values[3 * k + 2], epsilon = 1e-12);
    }
}

#[test]
fn kernel_reconstruction_and_orthonormality() {
    let mut r = rng(11);
    let b = make_basis(0.0, 3.0, 8, 3).unwrap();
    let fit = fit_for(&b, 2, &mut r);
    let model = separable_fpca(&fit, &b, 16).unwrap();
    let mut rec = Mat::zeros(8, 8);
    for i in 0..8 {
        let bi = model.kernel_coefs.column(i);
        for u in 0..8 {
            for v in 0..8 {
                rec[(u, v)] += model.kernel_values[i] * bi[u] * bi[v];
            }
        }
        for j in 0..8 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(model.kernel_inner(i, j), want, epsilon = 1e-8);
        }
    }
    assert!((&rec - &fit.sigma_col).max_abs() <= 1e-8 * fit.sigma_col.max_abs());
    assert!(model.product_values.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn score_variances_match_eigenvalues() {
    let mut r = rng(12);
    let b = make_basis(0.0, 1.0, 5, 3).unwrap();
    let fit = fit_for(&b, 3, &mut r);
    let model = separable_fpca(&fit, &b, 15).unwrap();
    let n = 5000;
    let mut sq = [0.0; 3];
    for _ in 0..n {
        let a = sample_matrix_normal(&fit, &mut r).unwrap();
        let s = scores(&a, &fit, &model, 3).unwrap();
        for k in 0..3 {
            sq[k] += s[k] * s[k] / n as f64;
        }
    }
    for k in 0..3 {
        let rel = (sq[k] - model.product_values[k]).abs() / model.product_values[k];
        assert!(rel < 0.1, "component {k}: {} vs {}", sq[k], model.product_values[k]);
    }
}

#[test]
fn scores_and_explained_variance() {
    let mut r = rng(13);
    let b = make_basis(0.0, 1.0, 6, 3).unwrap();
    let fit = fit_for(&b, 2, &mut r);
    let model = separable_fpca(&fit, &b, 12).unwrap();
    assert!(scores(&fit.mean, &fit, &model, 12).unwrap().iter().all(|&s| s == 0.0));
    let a = perturbed(&fit, &mut r);
    let s = scores(&a, &fit, &model, 12).unwrap();
    let parseval: f64 = s.iter().zip(&model.product_values).map(|(x, p)| x * x / p).sum();
    let d = fmmd2_coef(&a, &fit).unwrap();
    assert_abs_diff_eq!(parseval, d, epsilon = 1e-8 * (1.0 + d));
    assert_abs_diff_eq!(fmmd2_from_model(&a, &fit, &model, 12).unwrap(), d, epsilon = 1e-8 * (1.0 + d));

    let mut scaled = fit.clone();
    scaled.sigma_row = fit.sigma_row.scale(4.0);
    scaled.sigma_col = fit.sigma_col.scale(0.25);
    let other = separable_fpca_with_gram(&scaled, &b.gram(), 12).unwrap();
    for (x, y) in model.explained_variance().iter().zip(other.explained_variance()) {
        assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
    }
    assert_abs_diff_eq!(model.explained_variance().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
}

#[test]
fn single_precision_distances() {
    let mut r = rng(14);
    let b64 = make_basis(0.0, 1.0, 5, 3).unwrap();
    let fit = fit_for(&b64, 2, &mut r);
    let a = perturbed(&fit, &mut r);
    let fit32 = SeparableFit::<f32>::new(fit.mean.cast(), fit.sigma_row.cast(), fit.sigma_col.cast()).unwrap();
    let b32 = make_basis(0.0f32, 1.0, 5, 3).unwrap();
    let d32 = fmmd2_spectral(&a.cast(), &fit32, &b32, 10).unwrap() as f64;
    let d64 = fmmd2_coef(&a, &fit).unwrap();
    assert!((d32 - d64).abs() <= 1e-3 * (1.0 + d64));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn truncated_distance_is_monotone(seed in any::<u64>(), p in 1usize..4) {
        let mut r = rng(seed);
        let b = make_basis(0.0, 1.0, 5, 3).unwrap();
        let fit = fit_for(&b, p, &mut r);
        let a = perturbed(&fit, &mut r);
        let model = separable_fpca(&fit, &b, 5 * p).unwrap();
        let mut prev = 0.0;
        for k in 1..=5 * p {
            let v = fmmd2_from_model(&a, &fit, &model, k).unwrap();
            prop_assert!(v >= prev - 1e-12 * (1.0 + v));
            prev = v;
        }
    }
}
