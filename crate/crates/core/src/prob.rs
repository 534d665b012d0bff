//! Parametric distributions, sample statistics and densities tabulated on a
//! uniform grid.
//!
//! [`GridPdf`] is the common currency of the numerical information measures
//! in [`crate::info`]. All grid integrals use the trapezoidal rule.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng;

/// Default clipping threshold for [`clip_normalize`].
pub const DEFAULT_CLIP_EPS: f64 = 1e-5;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Trapezoidal integral of equally spaced samples.
pub fn trapz(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            dx * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Multivariate Gaussian `N(mean, cov)`.
#[derive(Debug, Clone)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    /// Any `F` with `F Fᵀ = cov`, used for sampling.
    factor: DMatrix<f64>,
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if m == 0 {
            return Err(Error::Size("Gaussian of dimension 0".into()));
        }
        if cov.nrows() != m || cov.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {m}, covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite Gaussian parameter".into()));
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        for i in 0..m {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::NotSymmetric(format!(
                        "cov[{i},{j}] = {} vs cov[{j},{i}] = {}",
                        cov[(i, j)],
                        cov[(j, i)]
                    )));
                }
            }
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let factor = psd_factor(&cov)?;
        Ok(Self { mean, cov, factor })
    }

    /// One-dimensional `N(mean, var)`.
    pub fn univariate(mean: f64, var: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var))
    }

    /// `N(mean, var * I)`.
    pub fn isotropic(mean: DVector<f64>, var: f64) -> Result<Self> {
        let m = mean.len();
        Self::new(mean, DMatrix::identity(m, m) * var)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    fn require_univariate(&self) -> Result<(f64, f64)> {
        if self.dim() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected a one-dimensional Gaussian, got dimension {}",
                self.dim()
            )));
        }
        Ok((self.mean[0], self.cov[(0, 0)]))
    }

    /// Draws one vector from `rng`.
    pub fn draw(&self, rng: &mut rng::Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.factor * z
    }

    /// `count` independent draws, reproducible per seed.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut r = rng::rng(seed);
        (0..count).map(|_| self.draw(&mut r)).collect()
    }

    /// Scalar draws from a one-dimensional Gaussian.
    pub fn sample_scalar(&self, count: usize, seed: u64) -> Result<Vec<f64>> {
        let (mu, var) = self.require_univariate()?;
        let sd = var.max(0.0).sqrt();
        let mut r = rng::rng(seed);
        Ok((0..count)
            .map(|_| mu + sd * r.sample::<f64, _>(StandardNormal))
            .collect())
    }
}

/// Factor `F` with `F Fᵀ = cov`: Cholesky when possible, otherwise a clipped
/// eigen-decomposition so that singular (e.g. zero) covariances still sample.
pub(crate) fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = cov.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = cov.clone().symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if min < -PSD_TOL * max.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveSemiDefinite(format!(
            "min eigenvalue {min:e}, max {max:e}"
        )));
    }
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals))
}

/// Gamma distribution with shape `k` and scale `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaDist {
    shape: f64,
    scale: f64,
}

impl GammaDist {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Gamma needs k > 0 and theta > 0, got k = {shape}, theta = {scale}"
            )));
        }
        Ok(Self { shape, scale })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }

    pub fn skewness(&self) -> f64 {
        2.0 / self.shape.sqrt()
    }

    /// Excess kurtosis `6/k`; the raw value is `3 + 6/k`.
    pub fn excess_kurtosis(&self) -> f64 {
        6.0 / self.shape
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x == 0.0 {
            return if self.shape < 1.0 {
                f64::INFINITY
            } else if self.shape == 1.0 {
                1.0 / self.scale
            } else {
                0.0
            };
        }
        let k = self.shape;
        ((k - 1.0) * x.ln() - x / self.scale - ln_gamma(k) - k * self.scale.ln()).exp()
    }

    pub fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        let g = rand_distr::Gamma::new(self.shape, self.scale).expect("validated at construction");
        let mut r = rng::rng(seed);
        (0..count).map(|_| g.sample(&mut r)).collect()
    }
}

/// A univariate density that can be evaluated on a grid.
pub trait Density {
    fn pdf(&self, x: f64) -> f64;

    /// Rejects grids outside the support or where the density is unbounded.
    fn check_grid(&self, x0: f64, x_last: f64) -> Result<()>;
}

impl Density for GaussianDist {
    fn pdf(&self, x: f64) -> f64 {
        let (mu, var) = (self.mean[0], self.cov[(0, 0)]);
        (-(x - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    fn check_grid(&self, _x0: f64, _x_last: f64) -> Result<()> {
        let (_, var) = self.require_univariate()?;
        if var <= 0.0 {
            return Err(Error::Domain("Gaussian with zero variance has no density".into()));
        }
        Ok(())
    }
}

impl Density for GammaDist {
    fn pdf(&self, x: f64) -> f64 {
        GammaDist::pdf(self, x)
    }

    fn check_grid(&self, x0: f64, _x_last: f64) -> Result<()> {
        if x0 < 0.0 {
            return Err(Error::Domain(format!(
                "Gamma grid must lie in x >= 0, starts at {x0}"
            )));
        }
        if x0 == 0.0 && self.shape < 1.0 {
            return Err(Error::Domain(format!(
                "Gamma density with k = {} is unbounded at 0; start the grid at x0 > 0",
                self.shape
            )));
        }
        Ok(())
    }
}

/// A probability density tabulated on the uniform grid `x0 + i*dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPdf {
    x0: f64,
    dx: f64,
    values: Vec<f64>,
}

impl GridPdf {
    /// Wraps raw values without normalizing them.
    pub fn new(x0: f64, dx: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Size(format!("grid needs n >= 2 points, got {}", values.len())));
        }
        if !(dx > 0.0 && dx.is_finite() && x0.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid needs dx > 0, got {dx}")));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "density values must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self { x0, dx, values })
    }

    /// Wraps and normalizes raw values.
    pub fn normalized_from(x0: f64, dx: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(x0, dx, values)?.normalized()
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.x(i))
    }

    pub fn integral(&self) -> f64 {
        trapz(&self.values, self.dx)
    }

    /// Rescales to unit trapezoidal integral.
    pub fn normalized(mut self) -> Result<Self> {
        let z = self.integral();
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::Normalization(z));
        }
        self.values.iter_mut().for_each(|v| *v /= z);
        Ok(self)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Quadrature mean.
    pub fn mean(&self) -> f64 {
        let w: Vec<f64> = self.xs().zip(&self.values).map(|(x, p)| x * p).collect();
        trapz(&w, self.dx) / self.integral()
    }

    /// Quadrature variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let w: Vec<f64> = self
            .xs()
            .zip(&self.values)
            .map(|(x, p)| (x - m).powi(2) * p)
            .collect();
        trapz(&w, self.dx) / self.integral()
    }

    /// True when both densities live on the same grid (relative tolerance 1e-12).
    pub fn same_grid(&self, other: &GridPdf) -> bool {
        let tol = 1e-12 * (self.dx.abs() + self.x0.abs()).max(1.0);
        self.len() == other.len()
            && (self.x0 - other.x0).abs() <= tol
            && (self.dx - other.dx).abs() <= 1e-12 * self.dx
    }

    /// Density of `a*X + b` when `X` has this density. Exact on the grid.
    pub fn affine(&self, a: f64, b: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("affine map needs a != 0, got {a}")));
        }
        let scale = 1.0 / a.abs();
        let mut values: Vec<f64> = self.values.iter().map(|v| v * scale).collect();
        let x0 = if a > 0.0 {
            a * self.x0 + b
        } else {
            values.reverse();
            a * self.x(self.len() - 1) + b
        };
        Self::new(x0, self.dx * a.abs(), values)
    }
}

/// Evaluates `dist` on `x0 + i*dx`, `i < n`, and normalizes.
pub fn tabulate<D: Density + ?Sized>(dist: &D, x0: f64, dx: f64, n: usize) -> Result<GridPdf> {
    if n < 2 {
        return Err(Error::Size(format!("grid needs n >= 2 points, got {n}")));
    }
    if !(dx > 0.0) {
        return Err(Error::InvalidParameter(format!("grid needs dx > 0, got {dx}")));
    }
    dist.check_grid(x0, x0 + (n - 1) as f64 * dx)?;
    let values = (0..n).map(|i| dist.pdf(x0 + i as f64 * dx)).collect();
    GridPdf::normalized_from(x0, dx, values)
}

/// Like [`tabulate`] but on the closed interval `[lo, hi]` with `n` points.
pub fn tabulate_range<D: Density + ?Sized>(dist: &D, lo: f64, hi: f64, n: usize) -> Result<GridPdf> {
    if n < 2 || !(hi > lo) {
        return Err(Error::Size(format!("need hi > lo and n >= 2, got [{lo}, {hi}], n = {n}")));
    }
    tabulate(dist, lo, (hi - lo) / (n - 1) as f64, n)
}

/// Sample moments. Central moments use the population (1/n) convention and
/// `kurtosis` is the raw value (3 for a Gaussian).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatSummary {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub n: usize,
}

impl StatSummary {
    pub fn excess_kurtosis(&self) -> f64 {
        self.kurtosis - 3.0
    }
}

pub fn summary_stats(samples: &[f64]) -> Result<StatSummary> {
    let n = samples.len();
    if n < 4 {
        return Err(Error::Size(format!("summary statistics need >= 4 samples, got {n}")));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 <= (f64::EPSILON * mean.abs()).powi(2) || m2 == 0.0 {
        return Err(Error::DegenerateSample(
            "zero variance: skewness and kurtosis are undefined".into(),
        ));
    }
    Ok(StatSummary {
        mean,
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2),
        n,
    })
}

/// Silverman's rule of thumb `1.06 * sd * n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    1.06 * var.sqrt() * n.powf(-0.2)
}

/// Gaussian kernels further than this many bandwidths contribute exp(-800),
/// which is exactly zero in f64, so skipping them does not change the sum.
const KERNEL_CUTOFF: f64 = 40.0;

/// Gaussian kernel density estimate on `x0 + i*dx`, normalized on the grid.
///
/// Far from the data the estimate underflows to exactly zero; feed it
/// through [`clip_normalize`] before using it as a reference density.
pub fn estimate_pdf(
    samples: &[f64],
    x0: f64,
    dx: f64,
    n: usize,
    bandwidth: Option<f64>,
) -> Result<GridPdf> {
    if samples.len() < 10 {
        return Err(Error::Size(format!(
            "density estimation needs >= 10 samples, got {}",
            samples.len()
        )));
    }
    if n < 2 || !(dx > 0.0) {
        return Err(Error::Size(format!("grid needs n >= 2 and dx > 0, got n = {n}, dx = {dx}")));
    }
    let mut sorted = samples.to_vec();
    if sorted.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite sample".into()));
    }
    sorted.sort_by(|a, b| a.total_cmp(b));
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::DegenerateSample("all samples are identical".into()));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::InvalidParameter(format!("bandwidth must be > 0, got {h}"))),
        None => silverman_bandwidth(&sorted),
    };
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let values = (0..n)
        .map(|i| {
            let x = x0 + i as f64 * dx;
            let lo = sorted.partition_point(|s| *s < x - KERNEL_CUTOFF * h);
            let hi = sorted.partition_point(|s| *s <= x + KERNEL_CUTOFF * h);
            let sum: f64 = sorted[lo..hi]
                .iter()
                .map(|s| {
                    let u = (x - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum();
            sum * norm
        })
        .collect();
    GridPdf::normalized_from(x0, dx, values)
}

/// Two-step tail remedy: raise every value below `eps` to `eps`, then
/// renormalize. The result is strictly positive.
pub fn clip_normalize(p: &GridPdf, eps: f64) -> Result<GridPdf> {
    let max = p.max_value();
    if !(eps > 0.0) || eps >= max {
        return Err(Error::InvalidThreshold { eps, max });
    }
    let values = p.values.iter().map(|v| v.max(eps)).collect();
    GridPdf::normalized_from(p.x0, p.dx, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples_are_degenerate() {
        assert!(matches!(
            summary_stats(&[5.0, 5.0, 5.0, 5.0]),
            Err(Error::DegenerateSample(_))
        ));
        assert!(matches!(summary_stats(&[1.0, 2.0, 3.0]), Err(Error::Size(_))));
    }

    #[test]
    fn gaussian_moments_from_a_million_draws() {
        let xs = GaussianDist::univariate(0.0, 1.0).unwrap().sample_scalar(1_000_000, 11).unwrap();
        let s = summary_stats(&xs).unwrap();
        assert!(s.mean.abs() < 0.005);
        assert!(s.skewness.abs() < 0.02, "{s:?}");
        assert!((s.kurtosis - 3.0).abs() < 0.05, "{s:?}");
    }

    #[test]
    fn gamma_moments_from_a_million_draws() {
        let g = GammaDist::new(4.0, 1.0).unwrap();
        let s = summary_stats(&g.sample(1_000_000, 5)).unwrap();
        assert!((s.skewness - g.skewness()).abs() < 0.03, "{s:?}");
        assert!((s.skewness - 1.0).abs() < 0.03);
        assert!((s.kurtosis - (3.0 + g.excess_kurtosis())).abs() < 0.2, "{s:?}");

        let g = GammaDist::new(2.0, 3.0).unwrap();
        let s = summary_stats(&g.sample(1_000_000, 6)).unwrap();
        assert!((s.mean - 6.0).abs() < 0.05);
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = GaussianDist::univariate(0.0, 1.0).unwrap();
        let a = d.sample_scalar(1000, 42).unwrap();
        let b = d.sample_scalar(1000, 42).unwrap();
        assert_eq!(a, b);
        let c = d.sample_scalar(1000, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_covariance_samples_are_the_mean() {
        let d = GaussianDist::new(DVector::from_vec(vec![1.0, 2.0]), DMatrix::zeros(2, 2)).unwrap();
        for v in d.sample(5, 1) {
            assert_eq!(v.as_slice(), &[1.0, 2.0]);
        }
    }

    #[test]
    fn rejects_asymmetric_and_indefinite_covariances() {
        let m = DVector::zeros(2);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(GaussianDist::new(m.clone(), asym), Err(Error::NotSymmetric(_))));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            GaussianDist::new(m, indef),
            Err(Error::NotPositiveSemiDefinite(_))
        ));
        assert!(GammaDist::new(0.0, 1.0).is_err());
        assert!(GammaDist::new(1.0, -1.0).is_err());
    }

    #[test]
    fn tabulated_standard_normal_is_normalized() {
        let d = GaussianDist::univariate(0.0, 1.0).unwrap();
        let p = tabulate_range(&d, -10.0, 10.0, 2001).unwrap();
        assert!((p.integral() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tabulated_exponential_starts_at_one() {
        let g = GammaDist::new(1.0, 1.0).unwrap();
        assert_eq!(g.pdf(0.0), 1.0);
        let p = tabulate_range(&g, 0.0, 20.0, 2001).unwrap();
        assert!((p.values()[0] - 1.0).abs() < 1e-4);
        assert!(matches!(tabulate_range(&g, -1.0, 20.0, 2001), Err(Error::Domain(_))));
        let g_half = GammaDist::new(0.5, 1.0).unwrap();
        assert!(matches!(tabulate(&g_half, 0.0, 0.01, 100), Err(Error::Domain(_))));
    }

    #[test]
    fn quadrature_mean_of_tabulated_gaussian() {
        let d = GaussianDist::univariate(2.0, 0.09).unwrap();
        let p = tabulate_range(&d, 2.0 - 3.0, 2.0 + 3.0, 4001).unwrap();
        assert!((p.mean() - 2.0).abs() < 1e-6);
        assert!((p.variance() - 0.09).abs() < 1e-6);
    }

    #[test]
    fn kde_errors_and_tails() {
        assert!(matches!(estimate_pdf(&[0.0], -1.0, 0.1, 21, None), Err(Error::Size(_))));
        assert!(matches!(
            estimate_pdf(&[1.0; 20], -1.0, 0.1, 21, None),
            Err(Error::DegenerateSample(_))
        ));
        let xs = GaussianDist::univariate(0.0, 0.25).unwrap().sample_scalar(10_000, 3).unwrap();
        let p = estimate_pdf(&xs, -10.0, 0.01, 2001, None).unwrap();
        assert_eq!(p.min_value(), 0.0);
        assert!((p.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clipping_removes_zeros() {
        let p = GridPdf::normalized_from(0.0, 0.1, vec![0.0, 0.0, 1.0, 2.0, 1.0, 0.0]).unwrap();
        let q = clip_normalize(&p, 1e-5).unwrap();
        assert!(q.min_value() > 0.0);
        assert!((q.integral() - 1.0).abs() < 1e-9);
        assert!(matches!(clip_normalize(&p, 10.0), Err(Error::InvalidThreshold { .. })));
        assert!(clip_normalize(&p, 0.0).is_err());
    }

    #[test]
    fn clipping_above_eps_is_a_no_op() {
        let d = GaussianDist::univariate(0.0, 1.0).unwrap();
        let p = tabulate_range(&d, -3.0, 3.0, 601).unwrap();
        let q = clip_normalize(&p, 1e-5).unwrap();
        for (a, b) in p.values().iter().zip(q.values()) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_transport_preserves_mass() {
        let d = GaussianDist::univariate(1.0, 0.5).unwrap();
        let p = tabulate_range(&d, -8.0, 10.0, 1001).unwrap();
        let q = p.affine(-2.0, 3.0).unwrap();
        assert!((q.integral() - 1.0).abs() < 1e-12);
        assert!((q.mean() - (-2.0 * p.mean() + 3.0)).abs() < 1e-9);
        assert!(p.affine(0.0, 1.0).is_err());
    }
}
