//! B-spline bases, Gram matrices and least-squares smoothing of discretely
//! observed curves into coefficient matrices.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Strictly increasing observation grid `t_1 < … < t_q`, `q >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T> {
    points: Vec<T>,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(points: Vec<T>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!("time grid needs at least 2 points, got {}", points.len())));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("time grid has non-finite points".into()));
        }
        if let Some(w) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!("time grid is not strictly increasing at position {}", w + 1)));
        }
        Ok(Self { points })
    }

    /// `q` equally spaced points from `lo` to `hi` inclusive.
    pub fn uniform(lo: T, hi: T, q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidInput("time grid needs at least 2 points".into()));
        }
        let step = (hi - lo) / T::from_usize_(q - 1);
        let mut points: Vec<T> = (0..q).map(|l| lo + step * T::from_usize_(l)).collect();
        points[q - 1] = hi;
        Self::new(points)
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lo(&self) -> T {
        self.points[0]
    }

    pub fn hi(&self) -> T {
        self.points[self.points.len() - 1]
    }

    /// Trapezoid quadrature weights on the grid.
    pub fn trapezoid_weights(&self) -> Vec<T> {
        let q = self.points.len();
        let half = T::lit(0.5);
        let mut w = vec![T::zero(); q];
        for l in 0..q - 1 {
            let h = (self.points[l + 1] - self.points[l]) * half;
            w[l] = w[l] + h;
            w[l + 1] = w[l + 1] + h;
        }
        w
    }
}

/// Clamped B-spline basis of a given degree and size on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSystem<T> {
    lo: T,
    hi: T,
    degree: usize,
    size: usize,
    knots: Vec<T>,
}

/// Clamped uniform B-spline basis with `m - degree - 1` equally spaced
/// interior knots.
pub fn make_basis<T: Real>(lo: T, hi: T, m: usize, degree: usize) -> Result<BasisSystem<T>> {
    BasisSystem::new(lo, hi, m, degree)
}

impl<T: Real> BasisSystem<T> {
    pub fn new(lo: T, hi: T, m: usize, degree: usize) -> Result<Self> {
        if m < degree + 1 {
            return Err(Error::InvalidConfig(format!("basis size {m} is smaller than degree + 1 = {}", degree + 1)));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidConfig(format!("invalid domain [{lo}, {hi}]")));
        }
        let n_interior = m - degree - 1;
        let mut knots = Vec::with_capacity(m + degree + 1);
        knots.extend(std::iter::repeat_n(lo, degree + 1));
        let spans = T::from_usize_(n_interior + 1);
        for k in 1..=n_interior {
            knots.push(lo + (hi - lo) * T::from_usize_(k) / spans);
        }
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Ok(Self { lo, hi, degree, size: m, knots })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn domain(&self) -> (T, T) {
        (self.lo, self.hi)
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    /// Interior knots (excluding the repeated boundary knots).
    pub fn interior_knots(&self) -> &[T] {
        &self.knots[self.degree + 1..self.size]
    }

    /// Distinct breakpoints `lo = ξ_0 < … < ξ_s = hi`.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut b = vec![self.lo];
        b.extend_from_slice(self.interior_knots());
        b.push(self.hi);
        b.dedup();
        b
    }

    fn check_domain(&self, t: T) -> Result<()> {
        if !(t >= self.lo && t <= self.hi) {
            return Err(Error::Domain {
                t: t.to_f64().unwrap_or(f64::NAN),
                lo: self.lo.to_f64_(),
                hi: self.hi.to_f64_(),
            });
        }
        Ok(())
    }

    /// Knot span index `k` with `knots[k] <= t < knots[k+1]` (right end
    /// mapped into the last non-empty span).
    fn span(&self, t: T) -> usize {
        let p = self.degree;
        let n = self.size;
        if t >= self.knots[n] {
            return n - 1;
        }
        let (mut low, mut high) = (p, n);
        while high - low > 1 {
            let mid = (low + high) / 2;
            if t < self.knots[mid] {
                high = mid;
            } else {
                low = mid;
            }
        }
        low
    }

    /// The `degree + 1` non-zero basis values at `t` and the index of the
    /// first of them.
    fn local(&self, t: T) -> (usize, Vec<T>) {
        let p = self.degree;
        let k = self.span(t);
        let mut n = vec![T::zero(); p + 1];
        let mut left = vec![T::zero(); p + 1];
        let mut right = vec![T::zero(); p + 1];
        n[0] = T::one();
        for j in 1..=p {
            left[j] = t - self.knots[k + 1 - j];
            right[j] = self.knots[k + j] - t;
            let mut saved = T::zero();
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (k - p, n)
    }

    /// All `m` basis values at `t` (Cox–de Boor recursion).
    pub fn eval(&self, t: T) -> Result<Vec<T>> {
        self.check_domain(t)?;
        let (first, local) = self.local(t);
        let mut out = vec![T::zero(); self.size];
        out[first..first + local.len()].copy_from_slice(&local);
        Ok(out)
    }

    /// `q × m` design matrix `[φ_k(t_l)]`.
    pub fn design(&self, grid: &TimeGrid<T>) -> Result<Matrix<T>> {
        let mut x = Matrix::zeros(grid.len(), self.size);
        for (l, &t) in grid.points().iter().enumerate() {
            self.check_domain(t)?;
            let (first, local) = self.local(t);
            x.row_mut(l)[first..first + local.len()].copy_from_slice(&local);
        }
        Ok(x)
    }

    /// Gram matrix `W = ∫ φ φ'` over the whole domain.
    pub fn gram(&self) -> Matrix<T> {
        self.gram_on(self.lo, self.hi).expect("full domain is a valid interval")
    }

    /// Gram matrix `W_{[a,b]} = ∫_a^b φ φ'`, computed exactly by
    /// Gauss–Legendre quadrature on every knot span intersected with `[a, b]`.
    pub fn gram_on(&self, a: T, b: T) -> Result<Matrix<T>> {
        if !(b > a) {
            return Err(Error::InvalidInput(format!("empty interval [{a}, {b}]")));
        }
        self.check_domain(a)?;
        self.check_domain(b)?;
        let (nodes, weights) = gauss_legendre(self.degree + 1);
        let nodes: Vec<T> = nodes.into_iter().map(T::lit).collect();
        let weights: Vec<T> = weights.into_iter().map(T::lit).collect();

        let mut cuts = vec![a];
        cuts.extend(self.breakpoints().into_iter().filter(|&k| k > a && k < b));
        cuts.push(b);

        let m = self.size;
        let mut w = Matrix::zeros(m, m);
        let half = T::lit(0.5);
        for piece in cuts.windows(2) {
            let (lo, hi) = (piece[0], piece[1]);
            let mid = (lo + hi) * half;
            let rad = (hi - lo) * half;
            for (&x, &wt) in nodes.iter().zip(&weights) {
                let t = mid + rad * x;
                let (first, vals) = self.local(t);
                let scale = wt * rad;
                for (i, &vi) in vals.iter().enumerate() {
                    for (j, &vj) in vals.iter().enumerate() {
                        w[(first + i, first + j)] = w[(first + i, first + j)] + scale * vi * vj;
                    }
                }
            }
        }
        w.symmetrize();
        Ok(w)
    }

    /// Values of `X(t) = A'φ(t)` on a grid, as a `p × q` matrix.
    pub fn evaluate(&self, coefs: &Matrix<T>, grid: &TimeGrid<T>) -> Result<Matrix<T>> {
        if coefs.rows() != self.size {
            return Err(Error::Shape(format!(
                "coefficient matrix has {} rows, basis size is {}",
                coefs.rows(),
                self.size
            )));
        }
        coefs.t_matmul(&self.design(grid)?.transpose())
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Discretely observed multivariate curves on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurves<T> {
    pub grid: TimeGrid<T>,
    /// One `p × q` matrix per sample.
    pub samples: Vec<Matrix<T>>,
    pub ids: Vec<String>,
    pub labels: Option<Vec<bool>>,
}

impl<T: Real> DiscreteCurves<T> {
    pub fn new(grid: TimeGrid<T>, samples: Vec<Matrix<T>>, ids: Vec<String>) -> Result<Self> {
        let curves = Self { grid, samples, ids, labels: None };
        curves.validate()?;
        Ok(curves)
    }

    /// Ids `"1"`, `"2"`, … assigned in order.
    pub fn with_default_ids(grid: TimeGrid<T>, samples: Vec<Matrix<T>>) -> Result<Self> {
        let ids = (1..=samples.len()).map(|i| i.to_string()).collect();
        Self::new(grid, samples, ids)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ids.len() != self.samples.len() {
            return Err(Error::Shape(format!("{} sample ids for {} samples", self.ids.len(), self.samples.len())));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.samples.len() {
                return Err(Error::Shape(format!("{} labels for {} samples", labels.len(), self.samples.len())));
            }
        }
        let q = self.grid.len();
        let p = self.samples.first().map_or(0, |s| s.rows());
        for (i, s) in self.samples.iter().enumerate() {
            if s.rows() != p || s.cols() != q {
                return Err(Error::Shape(format!(
                    "sample {} is {}x{}, expected {p}x{q}",
                    self.ids[i],
                    s.rows(),
                    s.cols()
                )));
            }
            if !s.is_finite() {
                return Err(Error::InvalidInput(format!("sample {} has non-finite values", self.ids[i])));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn p(&self) -> usize {
        self.samples.first().map_or(0, |s| s.rows())
    }

    pub fn q(&self) -> usize {
        self.grid.len()
    }
}

/// Householder QR of a tall matrix, kept in compact form.
struct Qr<T> {
    /// Householder vectors below the diagonal, `R` on and above it.
    qr: Matrix<T>,
    tau: Vec<T>,
}

impl<T: Real> Qr<T> {
    fn new(a: &Matrix<T>) -> Self {
        let (rows, cols) = a.shape();
        let mut qr = a.clone();
        let mut tau = vec![T::zero(); cols];
        for k in 0..cols.min(rows) {
            let norm = (k..rows).map(|i| qr[(i, k)] * qr[(i, k)]).sum::<T>().sqrt();
            if norm == T::zero() {
                continue;
            }
            let alpha = if qr[(k, k)] > T::zero() { -norm } else { norm };
            let v0 = qr[(k, k)] - alpha;
            for i in (k + 1)..rows {
                qr[(i, k)] = qr[(i, k)] / v0;
            }
            tau[k] = (alpha - qr[(k, k)]) / alpha;
            qr[(k, k)] = alpha;
            for j in (k + 1)..cols {
                let mut s = qr[(k, j)];
                for i in (k + 1)..rows {
                    s = s + qr[(i, k)] * qr[(i, j)];
                }
                s = s * tau[k];
                qr[(k, j)] = qr[(k, j)] - s;
                for i in (k + 1)..rows {
                    qr[(i, j)] = qr[(i, j)] - s * qr[(i, k)];
                }
            }
        }
        Self { qr, tau }
    }

    fn rank(&self, rel_tol: T) -> usize {
        let n = self.qr.cols();
        let max = (0..n).map(|k| self.qr[(k, k)].abs()).fold(T::zero(), T::max);
        (0..n).filter(|&k| self.qr[(k, k)].abs() > rel_tol * max).count()
    }

    /// Least-squares solution of `A x ≈ y` for full-rank `A`.
    fn solve(&self, y: &[T]) -> Vec<T> {
        let (rows, cols) = self.qr.shape();
        let mut b = y.to_vec();
        for k in 0..cols {
            let mut s = b[k];
            for i in (k + 1)..rows {
                s = s + self.qr[(i, k)] * b[i];
            }
            s = s * self.tau[k];
            b[k] = b[k] - s;
            for i in (k + 1)..rows {
                b[i] = b[i] - s * self.qr[(i, k)];
            }
        }
        let mut x = vec![T::zero(); cols];
        for k in (0..cols).rev() {
            let mut s = b[k];
            for j in (k + 1)..cols {
                s = s - self.qr[(k, j)] * x[j];
            }
            x[k] = s / self.qr[(k, k)];
        }
        x
    }
}

/// Least-squares projection of every coordinate of every sample onto the
/// basis. Returns one `m × p` coefficient matrix per sample.
pub fn smooth<T: Real>(curves: &DiscreteCurves<T>, basis: &BasisSystem<T>) -> Result<Vec<Matrix<T>>> {
    curves.validate()?;
    let m = basis.size();
    let q = curves.q();
    if q < m {
        return Err(Error::RankDeficient { basis_size: m, rank: q });
    }
    let design = basis.design(&curves.grid)?;
    let qr = Qr::new(&design);
    let rank = qr.rank(T::tol(1e-10));
    if rank < m {
        return Err(Error::RankDeficient { basis_size: m, rank });
    }
    let p = curves.p();
    Ok(curves
        .samples
        .par_iter()
        .map(|x| {
            let mut a = Matrix::zeros(m, p);
            for j in 0..p {
                a.set_column(j, &qr.solve(x.row(j)));
            }
            a
        })
        .collect())
}
