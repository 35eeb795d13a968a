//! Robust separable covariance estimation, functional Mahalanobis distances
//! and Shapley outlyingness decompositions for multivariate functional data.
//!
//! Linear-algebra and model code is generic over [`Real`] (`f32` or `f64`);
//! special functions, simulation and evaluation work in `f64`.
//!
//! Coefficient samples are `m × p` matrices `A` (basis index by coordinate)
//! with `vec(A) ~ N(vec(M), Σ^row ⊗ Σ^col)`.

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod error;
pub mod eval;
pub mod fmodel;
pub mod fpca;
pub mod matnorm;
pub mod matrix;
pub mod mmcd;
pub mod numerics;
pub mod scalar;
pub mod shapley;
pub mod simgen;
pub mod special;

pub use basis::{make_basis, smooth, BasisSystem, DiscreteCurves, TimeGrid};
pub use error::{Error, Result};
pub use eval::{auc, confusion_metrics, cov_error, mean_error, Confusion, MetricReport};
pub use fmodel::{chi2_cutoff, flag_outliers, fmd2, fmmd2_coef, fmmd2_spectral, DistanceResult};
pub use fpca::{scores, separable_fpca, FpcaModel};
pub use matnorm::{
    matnorm_logpdf, mmd2, mmle_flipflop, sample_matrix_normal, FlipFlopOptions, Provenance, SeparableFit,
    SCALE_CONVENTION,
};
pub use matrix::Matrix;
pub use mmcd::{consistency_factor, cstep, mmcd_fit, subset_mmle, MmcdConfig, RobustFitReport};
pub use numerics::{spd_factor, spd_inverse, sym_eigen, sym_sqrt, EigenPairs};
pub use scalar::Real;
pub use shapley::{
    shapley_bruteforce, shapley_coordinate, shapley_matrix_cellwise, shapley_multivariate, shapley_time,
    shapley_time_coordinate, shapley_time_univariate, DomainPartition, ShapleyMap,
};
pub use simgen::{
    inject_outliers, kernel_eval, make_sigma_row, sample_nonseparable, sample_process, Innovation, KernelSpec,
    MeanFunction, OutlierKind, OutlierSpec, SeparableSpec,
};

pub type Mat = Matrix<f64>;
pub type Mat32 = Matrix<f32>;
pub type SeparableFitF64 = SeparableFit<f64>;
pub type SeparableFitF32 = SeparableFit<f32>;
pub type Basis = BasisSystem<f64>;
pub type Grid = TimeGrid<f64>;
pub type Curves = DiscreteCurves<f64>;
