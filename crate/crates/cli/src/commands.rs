use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use sepfda::fmodel::fmmd2_from_model;
use sepfda::mmcd::raw_samples;
use sepfda::simgen::kernel_eigen_grid;
use sepfda::special::chi2_quantile;
use sepfda::{
    auc, confusion_metrics, cov_error, flag_outliers, inject_outliers, make_basis, make_sigma_row, mean_error,
    mmcd_fit, mmd2, mmle_flipflop, sample_process, separable_fpca, shapley_time_coordinate, smooth, Basis, Curves,
    DomainPartition, FlipFlopOptions, Grid, Innovation, KernelSpec, Mat, MeanFunction, MetricReport, MmcdConfig,
    OutlierKind, OutlierSpec, SeparableFit, SeparableSpec, SCALE_CONVENTION,
};

use crate::io::{fmt_f64, from_rows, open_output, read_curves, read_json, to_rows, write_curves, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Mmle,
    Mmcd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Smoothed,
    Raw,
}

#[derive(Debug, Clone, Args)]
pub struct BasisArgs {
    /// Number of B-spline basis functions.
    #[arg(long = "basis-size", default_value_t = 10)]
    pub basis_size: usize,
    /// Spline degree.
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SmoothArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Estimator::Mmcd)]
    pub estimator: Estimator,
    #[arg(long, value_enum, default_value_t = Mode::Smoothed)]
    pub mode: Mode,
    #[command(flatten)]
    pub basis: BasisArgs,
    /// Subset fraction for the robust estimator.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long = "n-subsets", default_value_t = 500)]
    pub n_subsets: usize,
    /// Required with `--estimator mmcd`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of retained components for the distances; defaults to all of them.
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Chi-square quantile of the flagging cutoff.
    #[arg(long, default_value_t = 0.99)]
    pub quantile: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DistanceArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Fit document written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub quantile: Option<f64>,
    /// Also write (empirical quantile, chi-square quantile) pairs to this file.
    #[arg(long = "emit-qq")]
    pub emit_qq: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ShapleyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub fit: PathBuf,
    /// Number of equal-length time intervals.
    #[arg(long, default_value_t = 1)]
    pub intervals: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FpcaArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelName {
    Ou,
    Matern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutlierName {
    None,
    Shift,
    Shape,
    Isolated,
    Covariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeanName {
    Bump,
    Linear,
    Zero,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    /// Number of equally spaced time points on [0, 1].
    #[arg(long)]
    pub q: usize,
    #[arg(long, value_enum, default_value_t = KernelName::Matern)]
    pub kernel: KernelName,
    /// Smoothness of the Matérn kernel.
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long, value_enum, default_value_t = MeanName::Bump)]
    pub mean: MeanName,
    /// Student-t innovations with this many degrees of freedom.
    #[arg(long)]
    pub df: Option<f64>,
    /// Fraction of contaminated samples.
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = OutlierName::None)]
    pub outlier: OutlierName,
    #[arg(long, default_value_t = 15.0)]
    pub magnitude: f64,
    /// Fraction of coordinates contaminated within an outlying sample.
    #[arg(long = "coord-fraction", default_value_t = 1.0)]
    pub coord_fraction: f64,
    /// Matérn smoothness of covariance outliers.
    #[arg(long = "outlier-nu", default_value_t = 0.1)]
    pub outlier_nu: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Ground truth document (labels, row covariance, kernel, mean, grid).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub fit: PathBuf,
    /// Ground truth document written by `simulate --truth`.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub estimator: Estimator,
    pub mode: Mode,
    pub basis_size: Option<usize>,
    pub degree: Option<usize>,
    pub domain: [f64; 2],
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub alpha: Option<f64>,
    pub n_subsets: Option<usize>,
    pub seed: Option<u64>,
    pub truncation: usize,
    pub quantile: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub mean_coefficients: Vec<Vec<f64>>,
    pub sigma_row: Vec<Vec<f64>>,
    pub sigma_col: Vec<Vec<f64>>,
    pub scale_convention: String,
    pub h_subset: Option<Vec<String>>,
    pub sample_ids: Vec<String>,
    pub distances: Vec<f64>,
    pub cutoff: f64,
    pub flags: Vec<bool>,
    pub config_echo: ConfigEcho,
}

impl FitDocument {
    fn separable_fit(&self) -> Result<SeparableFit<f64>> {
        let fit = SeparableFit::new(
            from_rows(&self.mean_coefficients, "mean_coefficients")?,
            from_rows(&self.sigma_row, "sigma_row")?,
            from_rows(&self.sigma_col, "sigma_col")?,
        )?;
        Ok(fit)
    }

    fn basis(&self) -> Result<Option<Basis>> {
        let e = &self.config_echo;
        match (e.mode, e.basis_size, e.degree) {
            (Mode::Raw, ..) => Ok(None),
            (Mode::Smoothed, Some(m), Some(degree)) => Ok(Some(make_basis(e.domain[0], e.domain[1], m, degree)?)),
            _ => bail!("fit document in smoothed mode lacks basis_size or degree"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDocument {
    pub seed: u64,
    pub sample_ids: Vec<String>,
    pub labels: Vec<bool>,
    pub sigma_row: Vec<Vec<f64>>,
    pub kernel: KernelSpec,
    pub mean: MeanFunction,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaDocument {
    pub kernel_eigenvalues: Vec<f64>,
    pub row_eigenvalues: Vec<f64>,
    pub product_eigenvalues: Vec<f64>,
    /// Column `i` of the kernel eigenfunction coefficient matrix, one vector per eigenfunction.
    pub eigenfunction_coefficients: Vec<Vec<f64>>,
    /// 1-based (kernel, row) index pair of every product component.
    pub product_pairs: Vec<[usize; 2]>,
}

fn prepare(curves: &Curves, mode: Mode, basis: Option<&Basis>) -> Result<Vec<Mat>> {
    match (mode, basis) {
        (Mode::Raw, _) => Ok(raw_samples(curves)),
        (Mode::Smoothed, Some(b)) => Ok(smooth(curves, b)?),
        (Mode::Smoothed, None) => bail!("smoothed mode needs a basis"),
    }
}

fn resolve_truncation(requested: Option<usize>, fit: &SeparableFit<f64>) -> Result<usize> {
    let full = fit.m() * fit.p();
    let t = requested.unwrap_or(full);
    ensure!(t >= 1 && t <= full, "truncation {t} outside 1..={full}");
    Ok(t)
}

fn distances(samples: &[Mat], fit: &SeparableFit<f64>, basis: Option<&Basis>, truncation: usize) -> Result<Vec<f64>> {
    let full = fit.m() * fit.p();
    match basis {
        Some(b) if truncation < full => {
            let model = separable_fpca(fit, b, truncation)?;
            Ok(samples.iter().map(|a| fmmd2_from_model(a, fit, &model, truncation)).collect::<sepfda::Result<_>>()?)
        }
        _ => Ok(samples.iter().map(|a| mmd2(a, fit)).collect::<sepfda::Result<_>>()?),
    }
}

fn check_domain(curves: &Curves, echo: &ConfigEcho) -> Result<()> {
    ensure!(
        curves.grid.lo() == echo.domain[0] && curves.grid.hi() == echo.domain[1],
        "data domain [{}, {}] differs from the fit domain [{}, {}]",
        curves.grid.lo(),
        curves.grid.hi(),
        echo.domain[0],
        echo.domain[1]
    );
    ensure!(curves.p() == echo.p, "data has {} coordinates, the fit has {}", curves.p(), echo.p);
    if echo.mode == Mode::Raw {
        ensure!(curves.q() == echo.q, "data has {} time points, the raw fit has {}", curves.q(), echo.q);
    }
    Ok(())
}

pub fn smooth_cmd(args: &SmoothArgs) -> Result<()> {
    let curves = read_curves(&args.input)?;
    let basis = make_basis(curves.grid.lo(), curves.grid.hi(), args.basis.basis_size, args.basis.degree)?;
    let coefs = smooth(&curves, &basis)?;
    let mut w = csv::Writer::from_writer(open_output(args.output.as_deref())?);
    w.write_record(["sample_id", "coordinate", "basis_index", "coefficient"])?;
    for (id, a) in curves.ids.iter().zip(&coefs) {
        for j in 0..a.cols() {
            for k in 0..a.rows() {
                w.write_record([id.as_str(), &(j + 1).to_string(), &(k + 1).to_string(), &fmt_f64(a[(k, j)])])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn fit_cmd(args: &FitArgs) -> Result<()> {
    let seed = match (args.estimator, args.seed) {
        (Estimator::Mmcd, None) => bail!("--seed is required with --estimator mmcd"),
        (_, s) => s,
    };
    let curves = read_curves(&args.input)?;
    let basis = match args.mode {
        Mode::Smoothed => {
            Some(make_basis(curves.grid.lo(), curves.grid.hi(), args.basis.basis_size, args.basis.degree)?)
        }
        Mode::Raw => None,
    };
    let samples = prepare(&curves, args.mode, basis.as_ref())?;

    let (fit, h_subset, alpha, n_subsets) = match args.estimator {
        Estimator::Mmle => {
            let opts = FlipFlopOptions::default();
            (mmle_flipflop(&samples, opts.tol, opts.max_iter)?, None, None, None)
        }
        Estimator::Mmcd => {
            let config = MmcdConfig {
                alpha: args.alpha,
                n_initial_subsets: args.n_subsets,
                seed: seed.unwrap_or_default(),
                ..MmcdConfig::default()
            };
            let report = mmcd_fit(&samples, &config)?;
            let ids: Vec<String> = report.h_subset.iter().map(|&i| curves.ids[i].clone()).collect();
            (report.reweighted_fit, Some(ids), Some(args.alpha), Some(args.n_subsets))
        }
    };

    let truncation = resolve_truncation(args.truncation, &fit)?;
    let d = distances(&samples, &fit, basis.as_ref(), truncation)?;
    let flagged = flag_outliers(&d, truncation, args.quantile)?;
    let cutoff = flagged.first().map_or(0.0, |r| r.cutoff);

    let doc = FitDocument {
        mean_coefficients: to_rows(&fit.mean),
        sigma_row: to_rows(&fit.sigma_row),
        sigma_col: to_rows(&fit.sigma_col),
        scale_convention: SCALE_CONVENTION.to_string(),
        h_subset,
        sample_ids: curves.ids.clone(),
        distances: d,
        cutoff,
        flags: flagged.iter().map(|r| r.flag).collect(),
        config_echo: ConfigEcho {
            estimator: args.estimator,
            mode: args.mode,
            basis_size: basis.as_ref().map(|b| b.size()),
            degree: basis.as_ref().map(|b| b.degree()),
            domain: [curves.grid.lo(), curves.grid.hi()],
            n: curves.n(),
            p: curves.p(),
            q: curves.q(),
            alpha,
            n_subsets,
            seed,
            truncation,
            quantile: args.quantile,
            converged: fit.converged,
        },
    };
    write_json(&doc, open_output(args.output.as_deref())?)
}

pub fn distance_cmd(args: &DistanceArgs) -> Result<()> {
    let doc: FitDocument = read_json(&args.fit)?;
    let fit = doc.separable_fit()?;
    let basis = doc.basis()?;
    let curves = read_curves(&args.input)?;
    check_domain(&curves, &doc.config_echo)?;
    let samples = prepare(&curves, doc.config_echo.mode, basis.as_ref())?;
    let truncation = resolve_truncation(args.truncation.or(Some(doc.config_echo.truncation)), &fit)?;
    let quantile = args.quantile.unwrap_or(doc.config_echo.quantile);
    let d = distances(&samples, &fit, basis.as_ref(), truncation)?;
    let flagged = flag_outliers(&d, truncation, quantile)?;

    let mut w = csv::Writer::from_writer(open_output(args.output.as_deref())?);
    w.write_record(["sample_id", "distance", "cutoff", "flag"])?;
    for (id, r) in curves.ids.iter().zip(&flagged) {
        w.write_record([id.as_str(), &fmt_f64(r.distance), &fmt_f64(r.cutoff), &r.flag.to_string()])?;
    }
    w.flush()?;

    if let Some(path) = &args.emit_qq {
        write_qq(&d, truncation, path)?;
    }
    Ok(())
}

fn write_qq(d: &[f64], dof: usize, path: &Path) -> Result<()> {
    let mut sorted = d.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut w = csv::Writer::from_writer(open_output(Some(path))?);
    w.write_record(["empirical_quantile", "chi2_quantile"])?;
    for (i, &v) in sorted.iter().enumerate() {
        let theory = chi2_quantile((i as f64 + 0.5) / n, dof as f64);
        w.write_record([fmt_f64(v), fmt_f64(theory)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn shapley_cmd(args: &ShapleyArgs) -> Result<()> {
    let doc: FitDocument = read_json(&args.fit)?;
    let fit = doc.separable_fit()?;
    let Some(basis) = doc.basis()? else {
        bail!("time contributions need a fit in smoothed mode");
    };
    let curves = read_curves(&args.input)?;
    check_domain(&curves, &doc.config_echo)?;
    let samples = prepare(&curves, Mode::Smoothed, Some(&basis))?;
    let (lo, hi) = basis.domain();
    let partition = DomainPartition::equal(lo, hi, args.intervals)?;

    let mut w = csv::Writer::from_writer(open_output(args.output.as_deref())?);
    w.write_record(["sample_id", "coordinate", "interval_index", "contribution", "normalized_contribution"])?;
    for (id, a) in curves.ids.iter().zip(&samples) {
        let map = shapley_time_coordinate(a, &fit, &basis, &partition)?;
        let norm = map.normalized();
        for k in 0..map.cell.rows() {
            for ai in 0..map.cell.cols() {
                w.write_record([
                    id.as_str(),
                    &(k + 1).to_string(),
                    &(ai + 1).to_string(),
                    &fmt_f64(map.cell[(k, ai)]),
                    &fmt_f64(norm[(k, ai)]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn fpca_cmd(args: &FpcaArgs) -> Result<()> {
    let doc: FitDocument = read_json(&args.fit)?;
    let fit = doc.separable_fit()?;
    let Some(basis) = doc.basis()? else {
        bail!("functional principal components need a fit in smoothed mode");
    };
    let truncation = resolve_truncation(args.truncation, &fit)?;
    let model = separable_fpca(&fit, &basis, truncation)?;
    let out = FpcaDocument {
        kernel_eigenvalues: model.kernel_values.clone(),
        row_eigenvalues: model.row_values.clone(),
        product_eigenvalues: model.product_values.iter().take(truncation).copied().collect(),
        eigenfunction_coefficients: (0..model.kernel_coefs.cols()).map(|i| model.kernel_coefs.column(i)).collect(),
        product_pairs: model.order.iter().take(truncation).map(|&(i, j)| [i + 1, j + 1]).collect(),
    };
    write_json(&out, open_output(args.output.as_deref())?)
}

pub fn simulate_cmd(args: &SimulateArgs) -> Result<()> {
    let Some(seed) = args.seed else {
        bail!("--seed is required for simulate");
    };
    ensure!(args.n >= 1 && args.p >= 1, "--n and --p must be positive");
    ensure!(args.q >= 2, "--q must be at least 2");
    let kernel = match (args.kernel, args.nu) {
        (KernelName::Ou, None) => KernelSpec::OU_DEFAULT,
        (KernelName::Ou, Some(_)) => bail!("--nu applies to the Matérn kernel only"),
        (KernelName::Matern, None) => KernelSpec::MATERN_DEFAULT,
        (KernelName::Matern, Some(nu)) => match KernelSpec::MATERN_DEFAULT {
            KernelSpec::Matern { sigma_sq, tau, .. } => KernelSpec::Matern { sigma_sq, tau, nu },
            other => other,
        },
    };
    let mean = match args.mean {
        MeanName::Bump => MeanFunction::Bump,
        MeanName::Linear => MeanFunction::Linear,
        MeanName::Zero => MeanFunction::Zero,
    };
    let innovation = match args.df {
        None => Innovation::Gaussian,
        Some(df) => Innovation::StudentT { df },
    };
    let grid = Grid::uniform(0.0, 1.0, args.q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = SeparableSpec { sigma_row: make_sigma_row(args.p, &mut rng), kernel, mean, innovation };
    let clean = sample_process(args.n, &grid, &spec, seed.wrapping_add(1))?;

    let kind = match args.outlier {
        OutlierName::None => None,
        OutlierName::Shift => Some(OutlierKind::Shift),
        OutlierName::Shape => Some(OutlierKind::Shape),
        OutlierName::Isolated => Some(OutlierKind::Isolated),
        OutlierName::Covariance => Some(OutlierKind::Covariance { nu: args.outlier_nu, tau: 5.0 }),
    };
    let curves = match kind {
        Some(kind) if args.eps > 0.0 => {
            let eigen = kernel_eigen_grid(&kernel, &grid)?;
            let os = OutlierSpec {
                kind,
                fraction: args.eps,
                coord_fraction: args.coord_fraction,
                magnitude: args.magnitude,
                seed: seed.wrapping_add(2),
            };
            inject_outliers(&clean, &os, &eigen, &spec)?
        }
        _ => {
            ensure!(args.eps == 0.0 || kind.is_some(), "--eps > 0 needs an --outlier type");
            Curves { labels: Some(vec![false; args.n]), ..clean }
        }
    };

    if let Some(path) = &args.truth {
        let truth = TruthDocument {
            seed,
            sample_ids: curves.ids.clone(),
            labels: curves.labels.clone().unwrap_or_else(|| vec![false; args.n]),
            sigma_row: to_rows(&spec.sigma_row),
            kernel,
            mean,
            grid: grid.points().to_vec(),
        };
        write_json(&truth, open_output(Some(path))?)?;
    }
    write_curves(&curves, open_output(args.output.as_deref())?)
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let doc: FitDocument = read_json(&args.fit)?;
    let truth: TruthDocument = read_json(&args.truth)?;
    ensure!(
        doc.sample_ids.len() == doc.flags.len() && doc.sample_ids.len() == doc.distances.len(),
        "fit document has inconsistent sample_ids, distances and flags"
    );
    let label_of: HashMap<&str, bool> =
        truth.sample_ids.iter().map(String::as_str).zip(truth.labels.iter().copied()).collect();
    let labels: Vec<bool> = doc
        .sample_ids
        .iter()
        .map(|id| label_of.get(id.as_str()).copied().with_context(|| format!("sample {id} has no ground truth label")))
        .collect::<Result<_>>()?;

    let confusion = confusion_metrics(&doc.flags, &labels)?;
    let area = match auc(&doc.distances, &labels) {
        Ok(a) => Some(a),
        Err(sepfda::Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let mut report = MetricReport::new(confusion, area);

    if let Some(basis) = doc.basis()? {
        let fit = doc.separable_fit()?;
        let grid = Grid::new(truth.grid.clone())?;
        ensure!(
            grid.lo() == doc.config_echo.domain[0] && grid.hi() == doc.config_echo.domain[1],
            "ground truth grid does not cover the fit domain"
        );
        let mu = truth.mean.on_grid(&grid);
        let p = fit.p();
        let true_mean = Mat::from_fn(p, grid.len(), |_, l| mu[l]);
        let sigma_row = from_rows(&truth.sigma_row, "sigma_row")?;
        report.mean_error = Some(mean_error(&fit.mean, &true_mean, &basis, &grid)?);
        report.cov_error = Some(cov_error(&fit, &sigma_row, &truth.kernel.grid_matrix(&grid), &basis, &grid)?);
    }
    write_json(&report, open_output(args.output.as_deref())?)
}
