//! Matrix minimum covariance determinant (MMCD) estimation: concentration
//! steps over `h`-subsets, multi-start search, consistency scaling and
//! reweighting.

use std::cmp::Ordering;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::DiscreteCurves;
use crate::error::{Error, Result};
use crate::matnorm::{existence_threshold, flipflop_subset, FlipFlopOptions, Provenance, SeparableFit};
use crate::matrix::Matrix;
use crate::scalar::Real;
use crate::special::{chi2_cdf, chi2_quantile};

#[derive(Debug, Clone, PartialEq)]
pub struct MmcdConfig {
    pub alpha: f64,
    pub n_initial_subsets: usize,
    pub n_best_kept: usize,
    pub max_csteps: usize,
    pub reweight_quantile: f64,
    pub seed: u64,
    /// Apply the consistency factors to the raw and reweighted fits.
    pub consistency: bool,
    pub flipflop: FlipFlopOptions,
    /// Flip-flop settings for the elemental fits and the first two c-steps
    /// of every start.
    pub initial_flipflop: FlipFlopOptions,
}

impl Default for MmcdConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            n_initial_subsets: 500,
            n_best_kept: 10,
            max_csteps: 100,
            reweight_quantile: 0.99,
            seed: 0,
            consistency: true,
            flipflop: FlipFlopOptions::default(),
            initial_flipflop: FlipFlopOptions { tol: 1e-6, max_iter: 2 },
        }
    }
}

impl MmcdConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    /// Subset size `⌈alpha·n⌉`.
    pub fn h(&self, n: usize) -> usize {
        ((self.alpha * n as f64).ceil() as usize).min(n)
    }

    fn validate(&self, n: usize, rows: usize, cols: usize) -> Result<usize> {
        if !(0.5..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha {} outside [0.5, 1]", self.alpha)));
        }
        if !(self.reweight_quantile > 0.5 && self.reweight_quantile < 1.0) {
            return Err(Error::InvalidConfig(format!("reweight quantile {} outside (0.5, 1)", self.reweight_quantile)));
        }
        if self.n_initial_subsets == 0 || self.n_best_kept == 0 {
            return Err(Error::InvalidConfig("subset counts must be positive".into()));
        }
        let h = self.h(n);
        let need = existence_threshold(rows, cols);
        if h < need {
            return Err(Error::InsufficientData(format!(
                "subset size {h} (alpha {} of {n} samples) is below the required {need} for {rows}x{cols} samples",
                self.alpha
            )));
        }
        Ok(h)
    }
}

/// Result of a robust fit.
#[derive(Debug, Clone)]
pub struct RobustFitReport<T> {
    /// Best `h`-subset fit after consistency scaling.
    pub raw_fit: SeparableFit<T>,
    pub reweighted_fit: SeparableFit<T>,
    /// Subset objective of the winning `h`-subset (before consistency scaling).
    pub objective: T,
    pub h_subset: Vec<usize>,
    pub weights: Vec<bool>,
    pub n_csteps_used: usize,
    /// Objective along every refined c-step chain, starting at the first
    /// `h`-subset.
    pub chains: Vec<Vec<T>>,
}

/// Flip-flop MLE on the subset `h_subset` and its objective.
pub fn subset_mmle<T: Real>(
    samples: &[Matrix<T>],
    h_subset: &[usize],
    opts: FlipFlopOptions,
) -> Result<(SeparableFit<T>, T)> {
    let r = flipflop_subset(samples, h_subset, opts, None)?;
    Ok((r.fit, r.objective))
}

/// Indices of the `h` smallest values, ties broken by ascending index;
/// returned in ascending index order.
pub fn smallest_h<T: Real>(distances: &[T], h: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].partial_cmp(&distances[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut chosen = order[..h].to_vec();
    chosen.sort_unstable();
    chosen
}

fn distances<T: Real>(samples: &[Matrix<T>], fit: &SeparableFit<T>) -> Result<Vec<T>> {
    let f = fit.factors()?;
    samples.iter().map(|a| f.mmd2(a)).collect()
}

/// One concentration step: keep the `h` samples closest under `current` and
/// refit on them, warm-starting the flip-flop at `current`'s column
/// covariance.
pub fn cstep<T: Real>(
    samples: &[Matrix<T>],
    current: &SeparableFit<T>,
    h: usize,
    opts: FlipFlopOptions,
) -> Result<(Vec<usize>, SeparableFit<T>, T)> {
    if h > samples.len() {
        return Err(Error::InvalidInput(format!("h = {h} exceeds {} samples", samples.len())));
    }
    let d = distances(samples, current)?;
    let subset = smallest_h(&d, h);
    let r = flipflop_subset(samples, &subset, opts, Some(&current.sigma_col))?;
    Ok((subset, r.fit, r.objective))
}

/// MCD-type consistency factor `alpha / F_{χ²(dof+2)}(χ²_alpha(dof))`.
pub fn consistency_factor(alpha: f64, dof: usize) -> f64 {
    if alpha >= 1.0 {
        return 1.0;
    }
    let q = chi2_quantile(alpha, dof as f64);
    alpha / chi2_cdf(q, dof as f64 + 2.0)
}

struct Chain<T> {
    subset: Vec<usize>,
    fit: SeparableFit<T>,
    objective: T,
    trace: Vec<T>,
    steps: usize,
}

fn better<T: Real>(a: &Chain<T>, b: &Chain<T>) -> Ordering {
    a.objective.partial_cmp(&b.objective).unwrap_or(Ordering::Equal).then_with(|| a.subset.cmp(&b.subset))
}

fn run_chain<T: Real>(
    samples: &[Matrix<T>],
    mut chain: Chain<T>,
    h: usize,
    max_steps: usize,
    opts: FlipFlopOptions,
) -> Result<Chain<T>> {
    while chain.steps < max_steps {
        let (subset, fit, objective) = cstep(samples, &chain.fit, h, opts)?;
        chain.steps += 1;
        let same = subset == chain.subset;
        chain.trace.push(objective);
        chain.subset = subset;
        chain.fit = fit;
        chain.objective = objective;
        if same {
            break;
        }
    }
    Ok(chain)
}

fn start_chain<T: Real>(
    samples: &[Matrix<T>],
    s: usize,
    elemental: usize,
    h: usize,
    config: &MmcdConfig,
) -> Result<Chain<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(s as u64);
    let mut seed_idx = rand::seq::index::sample(&mut rng, samples.len(), elemental).into_vec();
    seed_idx.sort_unstable();
    let opts = config.initial_flipflop;
    let start = flipflop_subset(samples, &seed_idx, opts, None)?;
    // first step moves from the elemental subset to an h-subset
    let (subset, fit, objective) = cstep(samples, &start.fit, h, opts)?;
    let chain = Chain { subset, fit, objective, trace: vec![objective], steps: 1 };
    run_chain(samples, chain, h, 2.min(config.max_csteps), opts)
}

/// Full MMCD search with consistency scaling and reweighting.
///
/// Samples may be `m × p` coefficient matrices or, for raw-data mode,
/// `q × p` matrices (see [`raw_samples`]).
pub fn mmcd_fit<T: Real>(samples: &[Matrix<T>], config: &MmcdConfig) -> Result<RobustFitReport<T>> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::InsufficientData("no samples".into()));
    }
    let (rows, cols) = samples[0].shape();
    if let Some(i) = samples.iter().position(|a| a.shape() != (rows, cols)) {
        return Err(Error::Shape(format!(
            "sample {i} is {}x{}, expected {rows}x{cols}",
            samples[i].rows(),
            samples[i].cols()
        )));
    }
    let h = config.validate(n, rows, cols)?;
    let elemental = existence_threshold(rows, cols).min(n);

    let starts: Vec<Result<Chain<T>>> =
        (0..config.n_initial_subsets).into_par_iter().map(|s| start_chain(samples, s, elemental, h, config)).collect();
    let mut failures = 0;
    let mut last_error = None;
    let mut candidates: Vec<Chain<T>> = Vec::new();
    for r in starts {
        match r {
            Ok(c) => candidates.push(c),
            Err(e) => {
                failures += 1;
                last_error = Some(e);
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::EstimationFailure(format!(
            "all {failures} initial subsets failed; last error: {}",
            last_error.map_or_else(|| "none".into(), |e| e.to_string())
        )));
    }
    if failures > 0 {
        warn!("{failures} of {} initial subsets were singular", config.n_initial_subsets);
    }
    candidates.sort_by(better);
    candidates.dedup_by(|a, b| a.subset == b.subset);
    candidates.truncate(config.n_best_kept);

    let refined: Vec<Chain<T>> = candidates
        .into_par_iter()
        .map(|c| run_chain(samples, c, h, config.max_csteps, config.flipflop))
        .collect::<Result<_>>()?;
    let chains: Vec<Vec<T>> = refined.iter().map(|c| c.trace.clone()).collect();
    let best = refined.into_iter().min_by(better).expect("at least one candidate");

    let dof = rows * cols;
    if !best.fit.converged {
        warn!("flip-flop on the best subset did not converge in {} iterations", config.flipflop.max_iter);
    }
    let mut raw_fit = best.fit;
    raw_fit.provenance = Provenance::MmcdRaw;
    raw_fit.h_subset = Some(best.subset.clone());
    if config.consistency {
        let c = consistency_factor(h as f64 / n as f64, dof);
        raw_fit.sigma_col = raw_fit.sigma_col.scale(T::lit(c));
    }
    raw_fit.apply_scale_convention();
    let raw_d = distances(samples, &raw_fit)?;
    raw_fit.distances = Some(raw_d.clone());

    let cutoff = T::lit(chi2_quantile(config.reweight_quantile, dof as f64));
    let weights: Vec<bool> = raw_d.iter().map(|&d| d <= cutoff).collect();
    let kept: Vec<usize> = (0..n).filter(|&i| weights[i]).collect();
    let mut reweighted_fit = match flipflop_subset(samples, &kept, config.flipflop, None) {
        Ok(r) => {
            let mut fit = r.fit;
            if config.consistency {
                let c = consistency_factor(kept.len() as f64 / n as f64, dof);
                fit.sigma_col = fit.sigma_col.scale(T::lit(c));
            }
            fit.apply_scale_convention();
            fit
        }
        Err(e) => {
            warn!("reweighting failed ({e}); keeping the raw fit");
            raw_fit.clone()
        }
    };
    reweighted_fit.provenance = Provenance::MmcdReweighted;
    reweighted_fit.h_subset = Some(best.subset.clone());
    reweighted_fit.distances = Some(distances(samples, &reweighted_fit)?);

    Ok(RobustFitReport {
        raw_fit,
        reweighted_fit,
        objective: best.objective,
        h_subset: best.subset,
        weights,
        n_csteps_used: best.steps,
        chains,
    })
}

/// Raw-data mode: each `p × q` observation becomes a `q × p` sample, so
/// time plays the role of the basis index.
pub fn raw_samples<T: Real>(curves: &DiscreteCurves<T>) -> Vec<Matrix<T>> {
    curves.samples.iter().map(|x| x.transpose()).collect()
}
