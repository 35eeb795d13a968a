#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sepfda::{Mat, SeparableFit};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `B B' / n + shift·I` with Gaussian `B`.
pub fn random_spd(n: usize, shift: f64, rng: &mut impl Rng) -> Mat {
    let b = gaussian_matrix(n, n, rng);
    let mut s = b.matmul(&b.transpose()).unwrap().scale(1.0 / n as f64);
    for i in 0..n {
        s[(i, i)] += shift;
    }
    s.symmetrize();
    s
}

pub fn random_fit(m: usize, p: usize, rng: &mut impl Rng) -> SeparableFit<f64> {
    let mean = gaussian_matrix(m, p, rng);
    SeparableFit::new(mean, random_spd(p, 0.3, rng), random_spd(m, 0.3, rng)).unwrap()
}

/// Random sample near `fit.mean`.
pub fn perturbed(fit: &SeparableFit<f64>, rng: &mut impl Rng) -> Mat {
    let (m, p) = fit.mean.shape();
    &fit.mean + &gaussian_matrix(m, p, rng)
}

pub fn rel_err(a: &Mat, b: &Mat) -> f64 {
    (a - b).frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}

/// Multivariate normal log-density via an explicit Cholesky factor.
pub fn mvn_logpdf(x: &[f64], mean: &[f64], cov: &Mat) -> f64 {
    let n = x.len();
    let f = sepfda::spd_factor(cov).unwrap();
    let d: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let y = f.solve_vec(&d);
    let q: f64 = d.iter().zip(&y).map(|(a, b)| a * b).sum();
    -0.5 * q - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * f.log_det()
}

/// Quadratic form `d' S⁻¹ d`.
pub fn quad_inv(d: &[f64], s: &Mat) -> f64 {
    let y = sepfda::spd_factor(s).unwrap().solve_vec(d);
    d.iter().zip(&y).map(|(a, b)| a * b).sum()
}

/// Largest deviation of the empirical CDF of `values` from `cdf`.
pub fn kolmogorov_distance(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
