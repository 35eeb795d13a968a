//! Exact Shapley decompositions of squared Mahalanobis outlyingness over
//! coordinates, time intervals and basis cells, plus a brute-force
//! coalition-lattice evaluator.
//!
//! Coefficient samples are `m × p`; with `D = A − M`, the full decomposition
//! sums to `tr(Σ_row⁻¹ D' Σ_col⁻¹ D)`.

use crate::basis::BasisSystem;
use crate::error::{Error, Result};
use crate::matnorm::SeparableFit;
use crate::matrix::Matrix;
use crate::numerics::spd_factor;
use crate::scalar::Real;

/// Ordered partition of the domain into `d` adjacent intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPartition<T> {
    edges: Vec<T>,
}

impl<T: Real> DomainPartition<T> {
    /// Partition with breakpoints `edges[0] < edges[1] < … < edges[d]`.
    pub fn new(edges: Vec<T>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidInput("partition needs at least one interval".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("partition edges must be finite and strictly increasing".into()));
        }
        Ok(Self { edges })
    }

    /// `d` equal-length intervals of `[lo, hi]`.
    pub fn equal(lo: T, hi: T, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("number of intervals must be positive".into()));
        }
        let mut edges: Vec<T> = (0..=d).map(|a| lo + (hi - lo) * T::from_usize_(a) / T::from_usize_(d)).collect();
        edges[d] = hi;
        Self::new(edges)
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn interval(&self, a: usize) -> (T, T) {
        (self.edges[a], self.edges[a + 1])
    }

    /// Gram matrices `W_{T_a}` of every interval; the partition must cover
    /// the basis domain exactly.
    pub fn grams(&self, basis: &BasisSystem<T>) -> Result<Vec<Matrix<T>>> {
        let (lo, hi) = basis.domain();
        if self.edges[0] != lo || self.edges[self.len()] != hi {
            return Err(Error::InvalidInput(format!(
                "partition [{}, {}] does not cover the domain [{lo}, {hi}]",
                self.edges[0],
                self.edges[self.len()]
            )));
        }
        (0..self.len())
            .map(|a| {
                let (s, t) = self.interval(a);
                basis.gram_on(s, t)
            })
            .collect()
    }
}

/// Time-by-coordinate contribution table with its marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyMap<T> {
    /// `p × d`.
    pub cell: Matrix<T>,
    pub row_sums: Vec<T>,
    pub col_sums: Vec<T>,
    pub total: T,
}

impl<T: Real> ShapleyMap<T> {
    pub fn from_cells(cell: Matrix<T>) -> Self {
        let (p, d) = cell.shape();
        let row_sums: Vec<T> = (0..p).map(|k| cell.row(k).iter().copied().sum()).collect();
        let col_sums: Vec<T> = (0..d).map(|a| (0..p).map(|k| cell[(k, a)]).sum()).collect();
        let total = row_sums.iter().copied().sum();
        Self { cell, row_sums, col_sums, total }
    }

    /// Cells divided by the total.
    pub fn normalized(&self) -> Matrix<T> {
        if self.total == T::zero() {
            return Matrix::zeros(self.cell.rows(), self.cell.cols());
        }
        self.cell.scale(T::one() / self.total)
    }
}

/// `θ_k = (x_k − μ_k) Σ_j (x_j − μ_j) Ω_jk` with `Ω = Σ⁻¹`.
pub fn shapley_multivariate<T: Real>(x: &[T], mean: &[T], covariance: &Matrix<T>) -> Result<Vec<T>> {
    let p = x.len();
    if mean.len() != p || covariance.shape() != (p, p) {
        return Err(Error::Shape(format!(
            "point of length {p}, mean of length {}, covariance {}x{}",
            mean.len(),
            covariance.rows(),
            covariance.cols()
        )));
    }
    let d: Vec<T> = x.iter().zip(mean).map(|(&a, &b)| a - b).collect();
    let omega_d = spd_factor(covariance)?.solve_vec(&d);
    Ok(d.iter().zip(&omega_d).map(|(&a, &b)| a * b).collect())
}

fn check_fit<T: Real>(a: &Matrix<T>, fit: &SeparableFit<T>) -> Result<Matrix<T>> {
    if a.shape() != fit.mean.shape() {
        return Err(Error::Shape(format!("sample is {}x{}, fit expects {}x{}", a.rows(), a.cols(), fit.m(), fit.p())));
    }
    a.try_sub(&fit.mean)
}

/// `Σ_col⁻¹ D Σ_row⁻¹`.
fn precision_product<T: Real>(d: &Matrix<T>, fit: &SeparableFit<T>) -> Result<Matrix<T>> {
    let x = spd_factor(&fit.sigma_col)?.solve(d)?;
    Ok(spd_factor(&fit.sigma_row)?.solve(&x.transpose())?.transpose())
}

/// Column-wise dot products `Σ_r X[r,k] Y[r,k]`.
fn column_dots<T: Real>(x: &Matrix<T>, y: &Matrix<T>) -> Vec<T> {
    let mut out = vec![T::zero(); x.cols()];
    for r in 0..x.rows() {
        for (k, o) in out.iter_mut().enumerate() {
            *o = *o + x[(r, k)] * y[(r, k)];
        }
    }
    out
}

/// Time-specific contributions of a univariate coefficient vector:
/// `θ_a = d' W_{T_a} W⁻¹ Σ⁻¹ d`.
pub fn shapley_time_univariate<T: Real>(
    a: &[T],
    mean: &[T],
    sigma_col: &Matrix<T>,
    basis: &BasisSystem<T>,
    partition: &DomainPartition<T>,
) -> Result<Vec<T>> {
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
    let d: Vec<T> = a.iter().zip(mean).map(|(&x, &y)| x - y).collect();
    let y = spd_factor(&basis.gram())?.solve_vec(&spd_factor(sigma_col)?.solve_vec(&d));
    partition
        .grams(basis)?
        .iter()
        .map(|wa| {
            let wd = wa.matvec(&d)?;
            Ok(wd.iter().zip(&y).map(|(&u, &v)| u * v).sum())
        })
        .collect()
}

/// Time-by-coordinate contributions
/// `Θ_{k,a} = [D' W_{T_a} W⁻¹ Σ_col⁻¹ D Σ_row⁻¹]_{kk}`.
pub fn shapley_time_coordinate<T: Real>(
    a: &Matrix<T>,
    fit: &SeparableFit<T>,
    basis: &BasisSystem<T>,
    partition: &DomainPartition<T>,
) -> Result<ShapleyMap<T>> {
    if basis.size() != fit.m() {
        return Err(Error::Shape(format!("basis size {} does not match fit size {}", basis.size(), fit.m())));
    }
    shapley_time_coordinate_with_grams(a, fit, &basis.gram(), &partition.grams(basis)?)
}

/// As [`shapley_time_coordinate`] with explicit Gram matrices.
pub fn shapley_time_coordinate_with_grams<T: Real>(
    a: &Matrix<T>,
    fit: &SeparableFit<T>,
    gram: &Matrix<T>,
    interval_grams: &[Matrix<T>],
) -> Result<ShapleyMap<T>> {
    let d = check_fit(a, fit)?;
    let p = fit.p();
    let q = spd_factor(gram)?.solve(&precision_product(&d, fit)?)?;
    let mut cell = Matrix::zeros(p, interval_grams.len());
    for (ai, wa) in interval_grams.iter().enumerate() {
        for (k, v) in column_dots(&wa.matmul(&d)?, &q).into_iter().enumerate() {
            cell[(k, ai)] = v;
        }
    }
    Ok(ShapleyMap::from_cells(cell))
}

/// Coordinate-specific contributions `θ_k = [D' Σ_col⁻¹ D Σ_row⁻¹]_{kk}`.
pub fn shapley_coordinate<T: Real>(a: &Matrix<T>, fit: &SeparableFit<T>) -> Result<Vec<T>> {
    let d = check_fit(a, fit)?;
    Ok(column_dots(&d, &precision_product(&d, fit)?))
}

/// Time-specific contributions (column sums of the time-by-coordinate map).
pub fn shapley_time<T: Real>(
    a: &Matrix<T>,
    fit: &SeparableFit<T>,
    basis: &BasisSystem<T>,
    partition: &DomainPartition<T>,
) -> Result<Vec<T>> {
    Ok(shapley_time_coordinate(a, fit, basis, partition)?.col_sums)
}

/// Cellwise contributions `D ∘ (Σ_col⁻¹ D Σ_row⁻¹)`, returned as a
/// `p × m` (coordinate by basis function) matrix.
pub fn shapley_matrix_cellwise<T: Real>(a: &Matrix<T>, fit: &SeparableFit<T>) -> Result<Matrix<T>> {
    let d = check_fit(a, fit)?;
    Ok(d.hadamard(&precision_product(&d, fit)?)?.transpose())
}

pub const BRUTEFORCE_MAX_PLAYERS: usize = 12;

/// Exact Shapley values of an `n`-player game by enumerating all `2^n`
/// coalitions. Bit `i` of the coalition mask is player `i`.
pub fn shapley_bruteforce<T: Real>(n: usize, value: impl Fn(u32) -> T) -> Result<Vec<T>> {
    if n > BRUTEFORCE_MAX_PLAYERS {
        return Err(Error::Size(format!("{n} players exceed the enumeration limit of {BRUTEFORCE_MAX_PLAYERS}")));
    }
    let total = 1u32 << n;
    let v: Vec<T> = (0..total).map(&value).collect();
    // weight(s) = s! (n - s - 1)! / n!
    let mut fact = vec![1.0f64; n + 1];
    for k in 1..=n {
        fact[k] = fact[k - 1] * k as f64;
    }
    let weights: Vec<T> = (0..n.max(1)).map(|s| T::lit(fact[s] * fact[n.saturating_sub(s + 1)] / fact[n])).collect();
    let mut phi = vec![T::zero(); n];
    for (i, out) in phi.iter_mut().enumerate() {
        let bit = 1u32 << i;
        let mut acc = T::zero();
        for s in (0..total).filter(|s| s & bit == 0) {
            let size = s.count_ones() as usize;
            acc = acc + weights[size] * (v[(s | bit) as usize] - v[s as usize]);
        }
        *out = acc;
    }
    Ok(phi)
}
