//! Detection metrics (precision, recall, F-score, AUC) and integrated mean
//! and covariance estimation errors.

use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, TimeGrid};
use crate::error::{Error, Result};
use crate::matnorm::SeparableFit;
use crate::matrix::Matrix;

type Mat = Matrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub auc: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cov_error: Option<f64>,
}

impl MetricReport {
    pub fn new(confusion: Confusion, auc: Option<f64>) -> Self {
        Self {
            precision: confusion.precision,
            recall: confusion.recall,
            f_score: confusion.f_score,
            auc,
            tp: confusion.tp,
            fp: confusion.fp,
            tn: confusion.tn,
            fn_: confusion.fn_,
            mean_error: None,
            cov_error: None,
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Precision, recall and their harmonic mean; every undefined ratio is 0.
pub fn confusion_metrics(flags: &[bool], labels: &[bool]) -> Result<Confusion> {
    if flags.len() != labels.len() {
        return Err(Error::Shape(format!("{} flags for {} labels", flags.len(), labels.len())));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&f, &l) in flags.iter().zip(labels) {
        match (f, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f_score = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(Confusion { tp, fp, tn, fn_, precision, recall, f_score })
}

/// Area under the ROC curve via the Mann–Whitney statistic with midranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// `(p|T|)⁻¹ ∫ ‖μ(t) − μ̂(t)‖² dt` by trapezoid quadrature on `grid`;
/// `true_mean` holds `μ` on the grid as a `p × q` matrix.
pub fn mean_error(fitted_mean: &Mat, true_mean: &Mat, basis: &BasisSystem<f64>, grid: &TimeGrid<f64>) -> Result<f64> {
    let fitted = basis.evaluate(fitted_mean, grid)?;
    if true_mean.shape() != fitted.shape() {
        return Err(Error::Shape(format!(
            "true mean is {}x{}, fitted mean on the grid is {}x{}",
            true_mean.rows(),
            true_mean.cols(),
            fitted.rows(),
            fitted.cols()
        )));
    }
    let w = grid.trapezoid_weights();
    let p = fitted.rows();
    let mut total = 0.0;
    for (l, &wl) in w.iter().enumerate() {
        let sq: f64 = (0..p).map(|j| (true_mean[(j, l)] - fitted[(j, l)]).powi(2)).sum();
        total += wl * sq;
    }
    Ok(total / (p as f64 * (grid.hi() - grid.lo())))
}

/// Fitted kernel `k̂(s,t) = φ(s)' Σ^col φ(t)` on the grid.
pub fn fitted_kernel(fit: &SeparableFit<f64>, basis: &BasisSystem<f64>, grid: &TimeGrid<f64>) -> Result<Mat> {
    let phi = basis.design(grid)?;
    let mut k = phi.matmul(&fit.sigma_col)?.matmul(&phi.transpose())?;
    k.symmetrize();
    Ok(k)
}

/// `(p|T|)⁻² ∬ ‖Σ^row k(s,t) − Σ̂^row k̂(s,t)‖_F² ds dt` by double trapezoid
/// quadrature; `true_kernel` is `k` on the grid (`q × q`).
pub fn cov_error(
    fit: &SeparableFit<f64>,
    true_sigma_row: &Mat,
    true_kernel: &Mat,
    basis: &BasisSystem<f64>,
    grid: &TimeGrid<f64>,
) -> Result<f64> {
    let p = fit.p();
    let q = grid.len();
    if true_sigma_row.shape() != (p, p) || true_kernel.shape() != (q, q) {
        return Err(Error::Shape(format!(
            "true covariance is {}x{} with a {}x{} kernel; expected {p}x{p} and {q}x{q}",
            true_sigma_row.rows(),
            true_sigma_row.cols(),
            true_kernel.rows(),
            true_kernel.cols()
        )));
    }
    let k_hat = fitted_kernel(fit, basis, grid)?;
    let dot = |a: &Mat, b: &Mat| -> f64 { a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum() };
    let rr = dot(true_sigma_row, true_sigma_row);
    let rh = dot(true_sigma_row, &fit.sigma_row);
    let hh = dot(&fit.sigma_row, &fit.sigma_row);
    let w = grid.trapezoid_weights();
    let mut total = 0.0;
    for s in 0..q {
        for t in 0..q {
            let (k, kh) = (true_kernel[(s, t)], k_hat[(s, t)]);
            let v = rr * k * k - 2.0 * rh * k * kh + hh * kh * kh;
            total += w[s] * w[t] * v.max(0.0);
        }
    }
    let scale = p as f64 * (grid.hi() - grid.lo());
    Ok(total / (scale * scale))
}

/// Ratio of an error to a benchmark error.
pub fn relative_error(error: f64, benchmark: f64) -> f64 {
    error / benchmark
}
