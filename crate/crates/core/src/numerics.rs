//! Symmetric and SPD kernels: cyclic Jacobi eigensolver, Cholesky
//! factorisation, SPD inversion and symmetric matrix square roots.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Spectral decomposition of a symmetric matrix.
///
/// `values` are sorted in descending order and column `k` of `vectors`
/// belongs to `values[k]`. Each eigenvector is signed so that its entry of
/// largest magnitude is positive (lowest index wins on ties).
#[derive(Debug, Clone)]
pub struct EigenPairs<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Real> EigenPairs<T> {
    pub fn vector(&self, k: usize) -> Vec<T> {
        self.vectors.column(k)
    }

    /// Reassembles `V diag(f(λ)) V'`.
    pub fn reconstruct_with(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let n = self.values.len();
        let mut out = Matrix::zeros(n, n);
        for (k, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            for i in 0..n {
                let vik = self.vectors[(i, k)] * w;
                if vik == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] + vik * self.vectors[(j, k)];
                }
            }
        }
        out.symmetrize();
        out
    }
}

fn check_symmetric<T: Real>(s: &Matrix<T>, what: &str) -> Result<()> {
    if !s.is_square() {
        return Err(Error::Shape(format!("{what}: expected a square matrix, got {}x{}", s.rows(), s.cols())));
    }
    if !s.is_finite() {
        return Err(Error::InvalidInput(format!("{what}: non-finite entries")));
    }
    let asym = s.asymmetry();
    if asym > T::tol(1e-12) {
        return Err(Error::InvalidInput(format!("{what}: matrix is not symmetric (relative asymmetry {asym})")));
    }
    Ok(())
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigen<T: Real>(s: &Matrix<T>) -> Result<EigenPairs<T>> {
    check_symmetric(s, "sym_eigen")?;
    let n = s.rows();
    let mut a = s.clone();
    a.symmetrize();
    let mut v = Matrix::identity(n);

    let norm = a.frobenius_norm();
    let target = T::tol(1e-13) * norm;
    let off_norm = |a: &Matrix<T>| {
        let mut acc = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                acc = acc + a[(i, j)] * a[(i, j)];
            }
        }
        (acc + acc).sqrt()
    };

    const MAX_SWEEPS: usize = 100;
    let mut sweeps = 0;
    while norm > T::zero() && off_norm(&a) > target {
        if sweeps == MAX_SWEEPS {
            log::warn!("sym_eigen: Jacobi did not reach tolerance after {MAX_SWEEPS} sweeps");
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (apq + apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let t = if theta == T::zero() { T::one() } else { t };
                let c = T::one() / (t * t + T::one()).sqrt();
                let sn = t * c;

                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    let new_kp = c * akp - sn * akq;
                    let new_kq = sn * akp + c * akq;
                    a[(k, p)] = new_kp;
                    a[(p, k)] = new_kp;
                    a[(k, q)] = new_kq;
                    a[(q, k)] = new_kq;
                }
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the lower original index first among equal values.
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));

    let values: Vec<T> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        let mut col = v.column(src);
        orient(&mut col);
        vectors.set_column(k, &col);
    }
    Ok(EigenPairs { values, vectors })
}

/// Flips `v` so its largest-magnitude entry is positive; ties go to the
/// lowest index.
pub(crate) fn orient<T: Real>(v: &mut [T]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < T::zero()) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Cholesky factor `L` of an SPD matrix, `L L' = S`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn factor(&self) -> &Matrix<T> {
        &self.l
    }

    pub fn into_factor(self) -> Matrix<T> {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// `ln det S = 2 Σ ln L_ii`.
    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.dim()).map(|i| two * self.l[(i, i)].ln()).sum()
    }

    /// Solves `L y = b` in place.
    pub fn forward_solve(&self, b: &mut [T]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.l.row(i);
            let mut acc = b[i];
            for k in 0..i {
                acc = acc - row[k] * b[k];
            }
            b[i] = acc / row[i];
        }
    }

    /// Solves `L' x = y` in place.
    pub fn backward_solve(&self, y: &mut [T]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut acc = y[i];
            for k in (i + 1)..n {
                acc = acc - self.l[(k, i)] * y[k];
            }
            y[i] = acc / self.l[(i, i)];
        }
    }

    /// Solves `S x = b`.
    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.forward_solve(&mut x);
        self.backward_solve(&mut x);
        x
    }

    /// Solves `S X = B` column by column.
    pub fn solve(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        if b.rows() != self.dim() {
            return Err(Error::Shape(format!(
                "solve: factor is {0}x{0}, right-hand side has {1} rows",
                self.dim(),
                b.rows()
            )));
        }
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve_vec(&b.column(j));
            out.set_column(j, &x);
        }
        Ok(out)
    }

    /// `L⁻¹ B`, the whitening transform.
    pub fn whiten(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        if b.rows() != self.dim() {
            return Err(Error::Shape(format!(
                "whiten: factor is {0}x{0}, argument has {1} rows",
                self.dim(),
                b.rows()
            )));
        }
        let mut out = b.clone();
        let n = self.dim();
        let c = b.cols();
        let data = out.as_mut_slice();
        for i in 0..n {
            let (done, rest) = data.split_at_mut(i * c);
            let row = &mut rest[..c];
            for k in 0..i {
                let l = self.l[(i, k)];
                if l != T::zero() {
                    for (x, &y) in row.iter_mut().zip(&done[k * c..(k + 1) * c]) {
                        *x = *x - l * y;
                    }
                }
            }
            let d = self.l[(i, i)];
            row.iter_mut().for_each(|x| *x = *x / d);
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let x = self.solve_vec(&e);
            inv.set_column(j, &x);
        }
        inv.symmetrize();
        inv
    }
}

/// Cholesky factorisation of an SPD matrix.
///
/// Fails with [`Error::NotPositiveDefinite`] when a pivot drops to
/// `dim · 1e-14 · max diag` or below.
pub fn spd_factor<T: Real>(s: &Matrix<T>) -> Result<Cholesky<T>> {
    check_symmetric(s, "spd_factor")?;
    let n = s.rows();
    let max_diag = s.diagonal().into_iter().fold(T::zero(), T::max);
    let threshold = T::from_usize_(n) * T::tol(1e-14) * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if !(d > threshold) || max_diag <= T::zero() {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d.to_f64().unwrap_or(f64::NAN) });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut acc = s[(i, j)];
            for k in 0..j {
                acc = acc - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = acc / djj;
        }
    }
    Ok(Cholesky { l })
}

pub fn spd_inverse<T: Real>(s: &Matrix<T>) -> Result<Matrix<T>> {
    Ok(spd_factor(s)?.inverse())
}

/// `ln det S` from the Cholesky diagonal.
pub fn spd_log_det<T: Real>(s: &Matrix<T>) -> Result<T> {
    Ok(spd_factor(s)?.log_det())
}

fn psd_spectrum<T: Real>(s: &Matrix<T>, what: &str) -> Result<(EigenPairs<T>, T)> {
    let eig = sym_eigen(s)?;
    let n = T::from_usize_(s.rows());
    let lambda_max = eig.values.first().copied().unwrap_or(T::zero()).max(T::zero());
    let min = eig.values.last().copied().unwrap_or(T::zero());
    if min < -(n * T::tol(1e-10) * lambda_max) {
        return Err(Error::InvalidInput(format!("{what}: matrix has negative eigenvalue {min}")));
    }
    let floor = n * T::tol(1e-12) * lambda_max;
    Ok((eig, floor))
}

/// Symmetric square root of a PSD matrix. Eigenvalues below
/// `dim · 1e-12 · λ_max` are floored at that threshold.
pub fn sym_sqrt<T: Real>(s: &Matrix<T>) -> Result<Matrix<T>> {
    let (eig, floor) = psd_spectrum(s, "sym_sqrt")?;
    Ok(eig.reconstruct_with(|l| l.max(floor).sqrt()))
}

/// Symmetric inverse square root with the same eigenvalue floor as [`sym_sqrt`].
pub fn sym_inv_sqrt<T: Real>(s: &Matrix<T>) -> Result<Matrix<T>> {
    let (eig, floor) = psd_spectrum(s, "sym_inv_sqrt")?;
    if floor <= T::zero() {
        return Err(Error::InvalidInput("sym_inv_sqrt: zero matrix".into()));
    }
    Ok(eig.reconstruct_with(|l| T::one() / l.max(floor).sqrt()))
}
