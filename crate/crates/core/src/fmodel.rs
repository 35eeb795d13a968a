//! Functional Mahalanobis distances (coefficient and spectral routes), the
//! univariate truncated distance, χ² cutoffs and outlier flags.

use serde::{Deserialize, Serialize};

use crate::basis::BasisSystem;
use crate::error::{Error, Result};
use crate::fpca::{kernel_eigen, scores, separable_fpca, FpcaModel};
use crate::matnorm::{mmd2, SeparableFit};
use crate::matrix::Matrix;
use crate::scalar::Real;
use crate::special::chi2_quantile;

/// Squared distance of one sample together with its flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub distance: f64,
    pub truncation: usize,
    pub cutoff: f64,
    pub flag: bool,
}

/// Full-truncation squared functional distance, computed in coefficient space.
pub fn fmmd2_coef<T: Real>(a: &Matrix<T>, fit: &SeparableFit<T>) -> Result<T> {
    mmd2(a, fit)
}

/// Truncated squared functional distance `Σ_{k≤M} β_k² / π_k` from the
/// separable eigenpairs.
pub fn fmmd2_spectral<T: Real>(
    a: &Matrix<T>,
    fit: &SeparableFit<T>,
    basis: &BasisSystem<T>,
    truncation: usize,
) -> Result<T> {
    let model = separable_fpca(fit, basis, truncation)?;
    fmmd2_from_model(a, fit, &model, truncation)
}

/// As [`fmmd2_spectral`] with a precomputed model.
pub fn fmmd2_from_model<T: Real>(
    a: &Matrix<T>,
    fit: &SeparableFit<T>,
    model: &FpcaModel<T>,
    truncation: usize,
) -> Result<T> {
    let s = scores(a, fit, model, truncation)?;
    let last = model.product_values[truncation - 1];
    if !(last > T::zero()) {
        return Err(Error::Truncation { requested: truncation, reason: format!("eigenvalue {last} is not positive") });
    }
    Ok(s.iter().zip(&model.product_values).map(|(&b, &pi)| b * b / pi).sum())
}

/// Univariate truncated squared functional distance of coefficient vector
/// `a` with mean coefficients `mean` and kernel coefficient covariance
/// `sigma_col`.
pub fn fmd2<T: Real>(a: &[T], mean: &[T], sigma_col: &Matrix<T>, basis: &BasisSystem<T>, m_trunc: usize) -> Result<T> {
    let m = basis.size();
    if a.len() != m || mean.len() != m || sigma_col.shape() != (m, m) {
        return Err(Error::Shape(format!(
            "coefficients of length {}/{} and {}x{} covariance for basis size {m}",
            a.len(),
            mean.len(),
            sigma_col.rows(),
            sigma_col.cols()
        )));
    }
    crate::fpca::check_truncation(m, 1, m_trunc)?;
    let w = basis.gram();
    let (values, coefs) = kernel_eigen(sigma_col, &w)?;
    if !(values[m_trunc - 1] > T::zero()) {
        return Err(Error::Truncation {
            requested: m_trunc,
            reason: format!("eigenvalue {} is not positive", values[m_trunc - 1]),
        });
    }
    let d: Vec<T> = a.iter().zip(mean).map(|(&x, &y)| x - y).collect();
    let wd = w.matvec(&d)?;
    let mut total = T::zero();
    for (i, &l) in values.iter().enumerate().take(m_trunc) {
        let score: T = coefs.column(i).iter().zip(&wd).map(|(&b, &x)| b * x).sum();
        total = total + score * score / l;
    }
    Ok(total)
}

/// Upper `quantile` point of `χ²(dof)`.
pub fn chi2_cutoff(dof: usize, quantile: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::InvalidInput("degrees of freedom must be positive".into()));
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::InvalidInput(format!("quantile {quantile} outside (0, 1)")));
    }
    Ok(chi2_quantile(quantile, dof as f64))
}

/// Flag every distance strictly above the `χ²(dof)` cutoff.
pub fn flag_outliers(distances: &[f64], dof: usize, quantile: f64) -> Result<Vec<DistanceResult>> {
    let cutoff = chi2_cutoff(dof, quantile)?;
    distances
        .iter()
        .map(|&d| {
            if !(d >= 0.0) {
                return Err(Error::InvalidInput(format!("negative or undefined distance {d}")));
            }
            Ok(DistanceResult { distance: d, truncation: dof, cutoff, flag: d > cutoff })
        })
        .collect()
}
