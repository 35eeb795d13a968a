//! Synthetic multivariate functional data: covariance kernels, random
//! coordinate correlation matrices, separable and non-separable Gaussian or
//! Student-t processes, and the four outlier mechanisms.

use std::f64::consts::PI;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{DiscreteCurves, TimeGrid};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numerics::{spd_factor, sym_eigen};
use crate::special::{bessel_k, gamma};

type Mat = Matrix<f64>;

/// Stationary covariance kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `σ1² exp(−|s−t| / σ2)`.
    Ou { sigma1_sq: f64, sigma2: f64 },
    /// `σ² 2^{1−ν}/Γ(ν) (τd)^ν K_ν(τd)`, `d = |s−t|`.
    Matern { sigma_sq: f64, tau: f64, nu: f64 },
}

impl KernelSpec {
    pub const OU_DEFAULT: KernelSpec = KernelSpec::Ou { sigma1_sq: 0.3, sigma2: 0.3 };
    pub const MATERN_DEFAULT: KernelSpec = KernelSpec::Matern { sigma_sq: 1.0, tau: 5.0, nu: 0.5 };

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            KernelSpec::Ou { sigma1_sq, sigma2 } => sigma1_sq > 0.0 && sigma2 > 0.0,
            KernelSpec::Matern { sigma_sq, tau, nu } => sigma_sq > 0.0 && tau > 0.0 && nu > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("kernel parameters must be positive: {self:?}")))
        }
    }

    /// Marginal variance `κ(t, t)`.
    pub fn variance(&self) -> f64 {
        match *self {
            KernelSpec::Ou { sigma1_sq, .. } => sigma1_sq,
            KernelSpec::Matern { sigma_sq, .. } => sigma_sq,
        }
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        let d = (s - t).abs();
        match *self {
            KernelSpec::Ou { sigma1_sq, sigma2 } => sigma1_sq * (-d / sigma2).exp(),
            KernelSpec::Matern { sigma_sq, tau, nu } => {
                if d == 0.0 {
                    return sigma_sq;
                }
                let x = tau * d;
                let v = sigma_sq * 2f64.powf(1.0 - nu) / gamma(nu) * x.powf(nu) * bessel_k(nu, x);
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            }
        }
    }

    /// `q × q` kernel matrix on the grid (no jitter).
    pub fn grid_matrix(&self, grid: &TimeGrid<f64>) -> Mat {
        let t = grid.points();
        let mut k = Matrix::from_fn(t.len(), t.len(), |i, j| if j < i { 0.0 } else { self.eval(t[i], t[j]) });
        for i in 0..t.len() {
            for j in 0..i {
                k[(i, j)] = k[(j, i)];
            }
        }
        k
    }

    /// Lower Cholesky factor of the grid matrix plus `1e-10·σ²` jitter.
    pub fn grid_factor(&self, grid: &TimeGrid<f64>) -> Result<Mat> {
        self.validate()?;
        let mut k = self.grid_matrix(grid);
        let jitter = 1e-10 * self.variance();
        for i in 0..k.rows() {
            k[(i, i)] += jitter;
        }
        spd_factor(&k)
            .map(|c| c.into_factor())
            .map_err(|e| Error::KernelDegeneracy(format!("{self:?} on {} grid points: {e}", grid.len())))
    }
}

pub fn kernel_eval(spec: &KernelSpec, s: f64, t: f64) -> f64 {
    spec.eval(s, t)
}

/// Mean function shared by all coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanFunction {
    /// `30 t (1 − t)^{1.5}`.
    Bump,
    /// `4 t`.
    Linear,
    Zero,
}

impl MeanFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            MeanFunction::Bump => 30.0 * t * (1.0 - t).max(0.0).powf(1.5),
            MeanFunction::Linear => 4.0 * t,
            MeanFunction::Zero => 0.0,
        }
    }

    pub fn on_grid(&self, grid: &TimeGrid<f64>) -> Vec<f64> {
        grid.points().iter().map(|&t| self.eval(t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Innovation {
    Gaussian,
    StudentT { df: f64 },
}

/// Random correlation matrix: Gamma(2)-Dirichlet eigenvalues scaled to sum
/// `p`, Haar-random eigenvectors, then rescaled to unit diagonal.
pub fn make_sigma_row<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Mat {
    if p == 1 {
        return Matrix::identity(1);
    }
    let g = Gamma::new(2.0, 1.0).expect("valid gamma parameters");
    let raw: Vec<f64> = (0..p).map(|_| g.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let values: Vec<f64> = raw.iter().map(|v| v / total * p as f64).collect();

    // Gram–Schmidt on a Gaussian matrix gives a Haar orthogonal basis
    let mut q = Matrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    for j in 0..p {
        for k in 0..j {
            let dot: f64 = (0..p).map(|i| q[(i, j)] * q[(i, k)]).sum();
            for i in 0..p {
                q[(i, j)] -= dot * q[(i, k)];
            }
        }
        let norm = (0..p).map(|i| q[(i, j)] * q[(i, j)]).sum::<f64>().sqrt();
        for i in 0..p {
            q[(i, j)] /= norm;
        }
    }
    let mut s = Matrix::zeros(p, p);
    for (k, &l) in values.iter().enumerate() {
        for i in 0..p {
            for j in 0..p {
                s[(i, j)] += l * q[(i, k)] * q[(j, k)];
            }
        }
    }
    let d: Vec<f64> = s.diagonal().iter().map(|v: &f64| v.sqrt()).collect();
    let mut c = Matrix::from_fn(p, p, |i, j| s[(i, j)] / (d[i] * d[j]));
    c.symmetrize();
    for i in 0..p {
        c[(i, i)] = 1.0;
    }
    c
}

/// Ground truth of a separable simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableSpec {
    pub sigma_row: Mat,
    pub kernel: KernelSpec,
    pub mean: MeanFunction,
    pub innovation: Innovation,
}

fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `L_row Z L_grid'` for one draw.
fn centered_draw<R: Rng + ?Sized>(l_row: &Mat, l_grid: &Mat, rng: &mut R) -> Mat {
    let (p, q) = (l_row.rows(), l_grid.rows());
    let z = Matrix::from_fn(p, q, |_, _| rng.sample::<f64, _>(StandardNormal));
    l_row.matmul(&z).and_then(|x| x.matmul(&l_grid.transpose())).expect("conforming factors")
}

fn innovation_scale<R: Rng + ?Sized>(innovation: Innovation, rng: &mut R) -> Result<f64> {
    match innovation {
        Innovation::Gaussian => Ok(1.0),
        Innovation::StudentT { df } => {
            let chi = ChiSquared::new(df).map_err(|e| Error::InvalidConfig(format!("degrees of freedom {df}: {e}")))?;
            Ok(1.0 / (chi.sample(rng) / df).sqrt())
        }
    }
}

/// `n` draws of a separable process on `grid`; sample `i` uses rng stream
/// `i` of `seed`.
pub fn sample_process(n: usize, grid: &TimeGrid<f64>, spec: &SeparableSpec, seed: u64) -> Result<DiscreteCurves<f64>> {
    sample_nonseparable(n, grid, &[(spec.sigma_row.clone(), spec.kernel)], spec.mean, spec.innovation, seed)
}

/// Sum of independent separable components `(Σ^row_c, κ_c)` plus a common
/// mean.
pub fn sample_nonseparable(
    n: usize,
    grid: &TimeGrid<f64>,
    components: &[(Mat, KernelSpec)],
    mean: MeanFunction,
    innovation: Innovation,
    seed: u64,
) -> Result<DiscreteCurves<f64>> {
    if components.is_empty() {
        return Err(Error::InvalidConfig("at least one component is required".into()));
    }
    let p = components[0].0.rows();
    let mut factors = Vec::with_capacity(components.len());
    for (sigma_row, kernel) in components {
        if sigma_row.shape() != (p, p) {
            return Err(Error::Shape("component row covariances differ in size".into()));
        }
        factors.push((spd_factor(sigma_row)?.into_factor(), kernel.grid_factor(grid)?));
    }
    innovation_scale(innovation, &mut sample_rng(seed, 0))?;
    let mu = mean.on_grid(grid);
    let samples: Vec<Mat> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let mut x = Matrix::zeros(p, grid.len());
            for (l_row, l_grid) in &factors {
                x += &centered_draw(l_row, l_grid, &mut rng);
            }
            let s = innovation_scale(innovation, &mut rng).expect("validated above");
            Matrix::from_fn(p, grid.len(), |j, l| mu[l] + s * x[(j, l)])
        })
        .collect();
    DiscreteCurves::with_default_ids(grid.clone(), samples)
}

/// Eigenfunctions of a kernel on a grid under trapezoid quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEigen {
    pub values: Vec<f64>,
    /// Column `k` is `ξ_{k+1}` on the grid, with `Σ_l w_l ξ(t_l)² = 1`.
    pub functions: Mat,
    pub weights: Vec<f64>,
}

impl KernelEigen {
    pub fn function(&self, k: usize) -> Vec<f64> {
        self.functions.column(k)
    }
}

/// Solves `K W ξ = λ ξ` via the symmetric problem `W^{1/2} K W^{1/2}`.
pub fn kernel_eigen_grid(kernel: &KernelSpec, grid: &TimeGrid<f64>) -> Result<KernelEigen> {
    kernel.validate()?;
    let w = grid.trapezoid_weights();
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let k = kernel.grid_matrix(grid);
    let q = grid.len();
    let mut b = Matrix::from_fn(q, q, |i, j| sw[i] * k[(i, j)] * sw[j]);
    b.symmetrize();
    let eig = sym_eigen(&b)?;
    let functions = Matrix::from_fn(q, q, |i, j| eig.vectors[(i, j)] / sw[i]);
    Ok(KernelEigen { values: eig.values, functions, weights: w })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutlierKind {
    /// Add `λ ξ_1`.
    Shift,
    /// Add `λ ξ_10`.
    Shape,
    /// Add `λ (−1)^u (1.8 − (0.02π)^{−1/2} exp(−(t−α)²/0.02))`.
    Isolated,
    /// Redraw the coordinate from a Matérn kernel with these parameters.
    Covariance { nu: f64, tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierSpec {
    pub kind: OutlierKind,
    pub fraction: f64,
    pub coord_fraction: f64,
    pub magnitude: f64,
    pub seed: u64,
}

/// Replace `⌈ε n⌉` random samples by outliers in `⌊ε_coord p⌋` random
/// coordinates each; labels mark the replaced samples.
///
/// `truth` supplies the clean mean and row variances used by covariance
/// outliers; `eigen` supplies `ξ_1`, `ξ_10` for shift and shape outliers.
pub fn inject_outliers(
    curves: &DiscreteCurves<f64>,
    spec: &OutlierSpec,
    eigen: &KernelEigen,
    truth: &SeparableSpec,
) -> Result<DiscreteCurves<f64>> {
    if !(0.0..=1.0).contains(&spec.fraction) || !(0.0..=1.0).contains(&spec.coord_fraction) {
        return Err(Error::InvalidConfig("outlier fractions must lie in [0, 1]".into()));
    }
    let n = curves.n();
    let p = curves.p();
    let mut out = curves.clone();
    let mut labels = vec![false; n];
    let n_out = ((spec.fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let n_coord = ((spec.coord_fraction * p as f64) + 1e-9).floor() as usize;
    if n_out == 0 {
        out.labels = Some(labels);
        return Ok(out);
    }
    if n_coord == 0 {
        warn!("coordinate fraction {} of p = {p} contaminates no coordinate", spec.coord_fraction);
    }

    let grid = curves.grid.points();
    let perturbation: Option<Vec<f64>> = match spec.kind {
        OutlierKind::Shift => Some(eigen.function(0)),
        OutlierKind::Shape => {
            if eigen.functions.cols() < 10 {
                return Err(Error::InvalidConfig("shape outliers need at least 10 kernel eigenfunctions".into()));
            }
            Some(eigen.function(9))
        }
        _ => None,
    };
    let covariance_factor = match spec.kind {
        OutlierKind::Covariance { nu, tau } => {
            Some(KernelSpec::Matern { sigma_sq: 1.0, tau, nu }.grid_factor(&curves.grid)?)
        }
        _ => None,
    };
    let mu = truth.mean.on_grid(&curves.grid);

    let mut rng = sample_rng(spec.seed, u64::MAX);
    let mut chosen = rand::seq::index::sample(&mut rng, n, n_out).into_vec();
    chosen.sort_unstable();
    for &i in &chosen {
        labels[i] = true;
        let mut rng = sample_rng(spec.seed, i as u64);
        let mut coords = rand::seq::index::sample(&mut rng, p, n_coord).into_vec();
        coords.sort_unstable();
        let x = &mut out.samples[i];
        for &j in &coords {
            match spec.kind {
                OutlierKind::Shift | OutlierKind::Shape => {
                    let xi = perturbation.as_ref().expect("set for shift and shape");
                    for (l, &v) in xi.iter().enumerate() {
                        x[(j, l)] += spec.magnitude * v;
                    }
                }
                OutlierKind::Isolated => {
                    let sign = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
                    let alpha = rng.random_range(0.25..0.75);
                    let c = 1.0 / (0.02 * PI).sqrt();
                    for (l, &t) in grid.iter().enumerate() {
                        x[(j, l)] += spec.magnitude * sign * (1.8 - c * (-(t - alpha).powi(2) / 0.02).exp());
                    }
                }
                OutlierKind::Covariance { .. } => {
                    let lg = covariance_factor.as_ref().expect("set for covariance");
                    let z: Vec<f64> = (0..grid.len()).map(|_| rng.sample(StandardNormal)).collect();
                    let draw = lg.matvec(&z)?;
                    let sd = truth.sigma_row[(j, j)].sqrt();
                    for l in 0..grid.len() {
                        x[(j, l)] = mu[l] + sd * draw[l];
                    }
                }
            }
        }
    }
    out.labels = Some(labels);
    Ok(out)
}
