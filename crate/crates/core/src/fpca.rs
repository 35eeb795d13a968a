//! Separable functional PCA: kernel eigenfunctions from `Σ^col` and the Gram
//! matrix, multivariate eigenpairs as products with the `Σ^row` eigenpairs.

use log::warn;

use crate::basis::BasisSystem;
use crate::error::{Error, Result};
use crate::matnorm::SeparableFit;
use crate::matrix::Matrix;
use crate::numerics::{sym_eigen, sym_inv_sqrt, sym_sqrt};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct FpcaModel<T> {
    /// `λ_i^ker`, descending.
    pub kernel_values: Vec<T>,
    /// Column `i` holds the coefficient vector `b_i` of the `i`-th kernel
    /// eigenfunction.
    pub kernel_coefs: Matrix<T>,
    /// `λ_j^row`, descending.
    pub row_values: Vec<T>,
    /// Column `j` holds `v_j`.
    pub row_vectors: Matrix<T>,
    /// `(i, j)` pairs ordered by descending `π = λ_i^ker λ_j^row`.
    pub order: Vec<(usize, usize)>,
    pub product_values: Vec<T>,
    pub gram: Matrix<T>,
    /// Number of retained components.
    pub truncation: usize,
}

impl<T: Real> FpcaModel<T> {
    /// `b_i' W b_j`.
    pub fn kernel_inner(&self, i: usize, j: usize) -> T {
        let bi = self.kernel_coefs.column(i);
        let bj = self.kernel_coefs.column(j);
        let wbj = self.gram.matvec(&bj).expect("gram is m x m");
        bi.iter().zip(&wbj).map(|(&x, &y)| x * y).sum()
    }

    /// Fraction of total variance carried by each product component.
    pub fn explained_variance(&self) -> Vec<T> {
        let total: T = self.product_values.iter().copied().sum();
        self.product_values.iter().map(|&v| v / total).collect()
    }
}

pub(crate) fn check_truncation(m: usize, p: usize, truncation: usize) -> Result<()> {
    if truncation == 0 {
        return Err(Error::Truncation { requested: 0, reason: "must be positive".into() });
    }
    if truncation > m * p {
        return Err(Error::Truncation { requested: truncation, reason: format!("exceeds the rank m*p = {}", m * p) });
    }
    Ok(())
}

/// Kernel eigenpairs from `W^{1/2} Σ^col W^{1/2} = U Λ U'`, `b_i = W^{-1/2} u_i`.
pub fn kernel_eigen<T: Real>(sigma_col: &Matrix<T>, gram: &Matrix<T>) -> Result<(Vec<T>, Matrix<T>)> {
    let w_half = sym_sqrt(gram)?;
    let w_inv_half = sym_inv_sqrt(gram)?;
    let mut k = w_half.matmul(sigma_col)?.matmul(&w_half)?;
    k.symmetrize();
    let eig = sym_eigen(&k)?;
    Ok((eig.values, w_inv_half.matmul(&eig.vectors)?))
}

/// Separable FPCA with the basis Gram matrix.
pub fn separable_fpca<T: Real>(
    fit: &SeparableFit<T>,
    basis: &BasisSystem<T>,
    truncation: usize,
) -> Result<FpcaModel<T>> {
    if basis.size() != fit.m() {
        return Err(Error::Shape(format!("basis size {} does not match fit size {}", basis.size(), fit.m())));
    }
    separable_fpca_with_gram(fit, &basis.gram(), truncation)
}

/// Separable FPCA with an explicit Gram matrix `W`.
pub fn separable_fpca_with_gram<T: Real>(
    fit: &SeparableFit<T>,
    gram: &Matrix<T>,
    truncation: usize,
) -> Result<FpcaModel<T>> {
    let (m, p) = (fit.m(), fit.p());
    check_truncation(m, p, truncation)?;
    if gram.shape() != (m, m) {
        return Err(Error::Shape(format!("gram is {}x{}, expected {m}x{m}", gram.rows(), gram.cols())));
    }
    let (kernel_values, kernel_coefs) = kernel_eigen(&fit.sigma_col, gram)?;
    let row = sym_eigen(&fit.sigma_row)?;

    let mut order: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..p).map(move |j| (i, j))).collect();
    let pi = |&(i, j): &(usize, usize)| kernel_values[i] * row.values[j];
    order.sort_by(|a, b| pi(b).partial_cmp(&pi(a)).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(b)));
    let product_values: Vec<T> = order.iter().map(pi).collect();

    if truncation < m * p {
        let (a, b) = (product_values[truncation - 1], product_values[truncation]);
        if (a - b).abs() <= T::tol(1e-10) * a.abs() {
            warn!("eigenvalue tie at truncation level {truncation}; ties broken by (kernel index, row index)");
        }
    }
    if !truncation.is_multiple_of(p) && row.values[0] - row.values[p - 1] <= T::lit(1e-6) * row.values[0] {
        warn!("truncation level {truncation} is not a multiple of p = {p} with near-identity row covariance");
    }

    Ok(FpcaModel {
        kernel_values,
        kernel_coefs,
        row_values: row.values,
        row_vectors: row.vectors,
        order,
        product_values,
        gram: gram.clone(),
        truncation,
    })
}

/// Principal component scores `v_j' (A − M)' W b_i` for the first
/// `truncation` components.
pub fn scores<T: Real>(
    a: &Matrix<T>,
    fit: &SeparableFit<T>,
    model: &FpcaModel<T>,
    truncation: usize,
) -> Result<Vec<T>> {
    check_truncation(fit.m(), fit.p(), truncation)?;
    let d = a.try_sub(&fit.mean)?;
    // C[j, i] = v_j' D' W b_i
    let wb = model.gram.matmul(&model.kernel_coefs)?;
    let c = model.row_vectors.t_matmul(&d.t_matmul(&wb)?)?;
    Ok(model.order[..truncation].iter().map(|&(i, j)| c[(j, i)]).collect())
}
