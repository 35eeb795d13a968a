//! Matrix-normal model for `m × p` coefficient matrices: squared matrix
//! Mahalanobis distance, log-density, sampling and the flip-flop maximum
//! likelihood estimator.
//!
//! `vec(A)` has covariance `Σ^row ⊗ Σ^col`, where `Σ^col` (`m × m`) acts on
//! the basis index and `Σ^row` (`p × p`) on the coordinates.

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numerics::{spd_factor, sym_eigen, Cholesky};
use crate::scalar::Real;

pub const SCALE_CONVENTION: &str = "trace_row_equals_p";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Mmle,
    MmcdRaw,
    MmcdReweighted,
}

/// Mean and separable covariance of a matrix-normal model.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableFit<T> {
    pub mean: Matrix<T>,
    pub sigma_row: Matrix<T>,
    pub sigma_col: Matrix<T>,
    pub provenance: Provenance,
    pub h_subset: Option<Vec<usize>>,
    pub distances: Option<Vec<T>>,
    /// False when the flip-flop iteration hit its iteration limit.
    pub converged: bool,
    /// True when a covariance update had to be regularised.
    pub floored: bool,
}

impl<T: Real> SeparableFit<T> {
    /// Builds a fit and applies the scale convention.
    pub fn new(mean: Matrix<T>, sigma_row: Matrix<T>, sigma_col: Matrix<T>) -> Result<Self> {
        let (m, p) = mean.shape();
        if sigma_row.shape() != (p, p) || sigma_col.shape() != (m, m) {
            return Err(Error::Shape(format!(
                "mean is {m}x{p} but sigma_row is {}x{} and sigma_col is {}x{}",
                sigma_row.rows(),
                sigma_row.cols(),
                sigma_col.rows(),
                sigma_col.cols()
            )));
        }
        spd_factor(&sigma_row)?;
        spd_factor(&sigma_col)?;
        let mut fit = Self {
            mean,
            sigma_row,
            sigma_col,
            provenance: Provenance::Mmle,
            h_subset: None,
            distances: None,
            converged: true,
            floored: false,
        };
        fit.apply_scale_convention();
        Ok(fit)
    }

    /// Basis size `m`.
    pub fn m(&self) -> usize {
        self.mean.rows()
    }

    /// Number of coordinates `p`.
    pub fn p(&self) -> usize {
        self.mean.cols()
    }

    /// Rescale so that `trace(Σ^row) = p`, compensating in `Σ^col`.
    pub fn apply_scale_convention(&mut self) {
        let c = self.sigma_row.trace() / T::from_usize_(self.p());
        self.sigma_row = self.sigma_row.scale(T::one() / c);
        self.sigma_col = self.sigma_col.scale(c);
    }

    /// Kronecker covariance `Σ^row ⊗ Σ^col` of `vec(A)`.
    pub fn kronecker(&self) -> Matrix<T> {
        self.sigma_row.kron(&self.sigma_col)
    }

    pub fn factors(&self) -> Result<FitFactors<T>> {
        FitFactors::new(self)
    }
}

/// Cholesky factors of a fit, for repeated distance evaluations.
#[derive(Debug, Clone)]
pub struct FitFactors<T> {
    mean: Matrix<T>,
    row: Cholesky<T>,
    col: Cholesky<T>,
}

impl<T: Real> FitFactors<T> {
    pub fn new(fit: &SeparableFit<T>) -> Result<Self> {
        Ok(Self { mean: fit.mean.clone(), row: spd_factor(&fit.sigma_row)?, col: spd_factor(&fit.sigma_col)? })
    }

    fn check(&self, a: &Matrix<T>) -> Result<()> {
        if a.shape() != self.mean.shape() {
            return Err(Error::Shape(format!(
                "sample is {}x{}, fit expects {}x{}",
                a.rows(),
                a.cols(),
                self.mean.rows(),
                self.mean.cols()
            )));
        }
        Ok(())
    }

    /// `L_row⁻¹ (L_col⁻¹ (A − M))'`, whose squared Frobenius norm is the distance.
    pub fn whitened(&self, a: &Matrix<T>) -> Result<Matrix<T>> {
        self.check(a)?;
        let d = a.try_sub(&self.mean)?;
        let y = self.col.whiten(&d)?;
        self.row.whiten(&y.transpose())
    }

    pub fn mmd2(&self, a: &Matrix<T>) -> Result<T> {
        let z = self.whitened(a)?;
        Ok(z.as_slice().iter().map(|&x| x * x).sum())
    }

    pub fn logpdf(&self, a: &Matrix<T>) -> Result<T> {
        let (m, p) = self.mean.shape();
        let d2 = self.mmd2(a)?;
        let half = T::lit(0.5);
        let mp = T::from_usize_(m * p);
        Ok(-half * d2
            - half * mp * T::lit((2.0 * std::f64::consts::PI).ln())
            - half * T::from_usize_(p) * self.col.log_det()
            - half * T::from_usize_(m) * self.row.log_det())
    }
}

/// Squared matrix Mahalanobis distance `tr(Σ_row⁻¹ (A−M)' Σ_col⁻¹ (A−M))`.
pub fn mmd2<T: Real>(a: &Matrix<T>, fit: &SeparableFit<T>) -> Result<T> {
    fit.factors()?.mmd2(a)
}

/// Matrix-normal log-density.
pub fn matnorm_logpdf<T: Real>(a: &Matrix<T>, fit: &SeparableFit<T>) -> Result<T> {
    fit.factors()?.logpdf(a)
}

/// Draw `A = M + L_col Z L_row'` with iid standard normal `Z`.
pub fn sample_matrix_normal<T: Real, R: Rng + ?Sized>(fit: &SeparableFit<T>, rng: &mut R) -> Result<Matrix<T>> {
    let lc = spd_factor(&fit.sigma_col)?.into_factor();
    let lr = spd_factor(&fit.sigma_row)?.into_factor();
    let (m, p) = fit.mean.shape();
    let z = Matrix::from_fn(m, p, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
    let a = lc.matmul(&z)?.matmul(&lr.transpose())?;
    Ok(&a + &fit.mean)
}

/// Smallest sample size for which the matrix-normal MLE exists:
/// `⌊r/c + c/r⌋ + 2` for `r × c` samples.
pub fn existence_threshold(rows: usize, cols: usize) -> usize {
    (rows * rows + cols * cols) / (rows * cols) + 2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlipFlopOptions {
    /// Stop once the objective changes by at most this much between sweeps
    /// (or by a few ulps of its magnitude, whichever is larger).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FlipFlopOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100 }
    }
}

/// Outcome of a flip-flop run.
#[derive(Debug, Clone)]
pub struct FlipFlop<T> {
    pub fit: SeparableFit<T>,
    /// `p·ln det Σ^col + m·ln det Σ^row`.
    pub objective: T,
    pub iterations: usize,
    /// Mean log-density over the fitted samples after each full iteration.
    pub loglik_trace: Vec<T>,
}

fn subset_mean<T: Real>(samples: &[Matrix<T>], idx: &[usize]) -> Matrix<T> {
    let (m, p) = samples[idx[0]].shape();
    let mut mean = Matrix::zeros(m, p);
    for &i in idx {
        mean += &samples[i];
    }
    mean.scale(T::one() / T::from_usize_(idx.len()))
}

/// Factor `s`, flooring eigenvalues at `1e-12·λ_max` if it is numerically
/// singular. Returns the (possibly regularised) matrix, its factor, and
/// whether flooring was needed.
fn regularized_factor<T: Real>(mut s: Matrix<T>) -> Result<(Matrix<T>, Cholesky<T>, bool)> {
    s.symmetrize();
    if let Ok(f) = spd_factor(&s) {
        return Ok((s, f, false));
    }
    let eig = sym_eigen(&s)?;
    let lmax = eig.values[0];
    if !(lmax > T::zero()) {
        return Err(Error::InsufficientData("samples show no variation".into()));
    }
    let n = T::from_usize_(s.rows());
    // the Cholesky pivot threshold is n·1e-14 relative; stay well above it
    let floor = lmax * T::tol(1e-12).max(n * T::tol(1e-13));
    let r = eig.reconstruct_with(|l| l.max(floor));
    let f = spd_factor(&r).map_err(|_| Error::EstimationFailure("covariance update is singular".into()))?;
    Ok((r, f, true))
}

/// Flip-flop MLE restricted to the samples `idx`, started from `Σ^col = init`
/// (identity when `None`).
pub fn flipflop_subset<T: Real>(
    samples: &[Matrix<T>],
    idx: &[usize],
    opts: FlipFlopOptions,
    init_col: Option<&Matrix<T>>,
) -> Result<FlipFlop<T>> {
    if idx.is_empty() || samples.is_empty() {
        return Err(Error::InsufficientData("no samples".into()));
    }
    let (m, p) = samples[idx[0]].shape();
    if let Some(i) = idx.iter().find(|&&i| samples[i].shape() != (m, p)) {
        return Err(Error::Shape(format!(
            "sample {i} is {}x{}, expected {m}x{p}",
            samples[*i].rows(),
            samples[*i].cols()
        )));
    }
    let need = existence_threshold(m, p);
    if idx.len() < need {
        return Err(Error::InsufficientData(format!(
            "{} samples of size {m}x{p}; at least {need} are required",
            idx.len()
        )));
    }
    let h = T::from_usize_(idx.len());
    let mean = subset_mean(samples, idx);
    let centered: Vec<Matrix<T>> = idx.iter().map(|&i| &samples[i] - &mean).collect();
    if centered.iter().all(|d| d.max_abs() == T::zero()) {
        return Err(Error::InsufficientData("samples show no variation".into()));
    }

    let init = init_col.cloned().unwrap_or_else(|| Matrix::identity(m));
    let (_, mut col_factor, mut floored) = regularized_factor(init)?;
    let mut sigma_col;
    let mut sigma_row;
    let mut row_factor;
    let mut objective = T::infinity();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let tol = T::lit(opts.tol);

    loop {
        iterations += 1;
        // Σ^row = 1/(m h) Σ D' Σcol⁻¹ D
        let prec_col = col_factor.inverse();
        let mut s_row = Matrix::zeros(p, p);
        for d in &centered {
            s_row += &d.t_matmul(&prec_col.matmul(d)?)?;
        }
        let fl;
        (sigma_row, row_factor, fl) = regularized_factor(s_row.scale(T::one() / (T::from_usize_(m) * h)))?;
        floored |= fl;

        // Σ^col = 1/(p h) Σ D Σrow⁻¹ D'
        let prec_row = row_factor.inverse();
        let mut s_col = Matrix::zeros(m, m);
        for d in &centered {
            s_col += &d.matmul(&prec_row)?.matmul_t(d)?;
        }
        let fl;
        (sigma_col, _, fl) = regularized_factor(s_col.scale(T::one() / (T::from_usize_(p) * h)))?;
        floored |= fl;

        // keep trace(Σ^row) = p between iterations
        let c = sigma_row.trace() / T::from_usize_(p);
        sigma_row = sigma_row.scale(T::one() / c);
        sigma_col = sigma_col.scale(c);
        row_factor = spd_factor(&sigma_row)?;
        col_factor = spd_factor(&sigma_col)?;

        let new_objective = T::from_usize_(p) * col_factor.log_det() + T::from_usize_(m) * row_factor.log_det();
        // Σ d_i² = tr(Σcol⁻¹ Σ D Σrow⁻¹ D') with the rescaled factors
        let prec_col = col_factor.inverse();
        let d2_sum: T = c * prec_col.as_slice().iter().zip(s_col.as_slice()).map(|(&x, &y)| x * y).sum();
        let half = T::lit(0.5);
        let mp = T::from_usize_(m * p);
        trace.push(-half * d2_sum / h - half * new_objective - half * mp * T::lit((2.0 * std::f64::consts::PI).ln()));
        let change = (new_objective - objective).abs();
        let done = change <= tol.max(T::lit(8.0) * T::epsilon() * new_objective.abs());
        objective = new_objective;
        if done {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
    }
    if floored {
        warn!("flip-flop covariance update was regularised");
    }

    let fit = SeparableFit {
        mean,
        sigma_row,
        sigma_col,
        provenance: Provenance::Mmle,
        h_subset: None,
        distances: None,
        converged,
        floored,
    };
    Ok(FlipFlop { fit, objective, iterations, loglik_trace: trace })
}

/// Flip-flop MLE on all samples, started from `Σ^col = I`.
pub fn mmle_flipflop<T: Real>(samples: &[Matrix<T>], tol: f64, max_iter: usize) -> Result<SeparableFit<T>> {
    let idx: Vec<usize> = (0..samples.len()).collect();
    let mut fit = flipflop_subset(samples, &idx, FlipFlopOptions { tol, max_iter }, None)?.fit;
    if !fit.converged {
        warn!("flip-flop did not converge in {max_iter} iterations");
    }
    let factors = fit.factors()?;
    fit.distances = Some(samples.iter().map(|a| factors.mmd2(a)).collect::<Result<_>>()?);
    Ok(fit)
}
