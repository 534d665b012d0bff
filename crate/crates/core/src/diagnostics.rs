//! Diagnostics under uncertainty: least-squares parameter estimation when
//! the regressor is only known in distribution, and Okubo-Weiss eddy
//! identification on sampled posterior flows.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{velocity_on_grid, FlowModelConfig, VelocityGradient};
use crate::error::{Error, Result};
use crate::lada::FilterTrajectory;
use crate::prob::{summary_stats, GaussianDist, StatSummary};
use crate::rng;

/// Ratio of smallest to largest normal-matrix eigenvalue below which the
/// least-squares problem is treated as rank deficient.
const RANK_TOL: f64 = 1e-13;

/// `θ = (Σ Mᵢᵀ Mᵢ)⁻¹ Σ Mᵢᵀ zᵢ`.
pub fn estimate_theta_full(m_blocks: &[DMatrix<f64>], z_blocks: &[DVector<f64>]) -> Result<DVector<f64>> {
    let p = m_blocks.first().map(|m| m.ncols()).ok_or_else(|| Error::Size("no regression blocks".into()))?;
    if m_blocks.len() != z_blocks.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} design blocks, {} response blocks",
            m_blocks.len(),
            z_blocks.len()
        )));
    }
    let mut normal = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for (m, z) in m_blocks.iter().zip(z_blocks) {
        if m.ncols() != p || m.nrows() != z.len() {
            return Err(Error::DimensionMismatch("inconsistent regression block shapes".into()));
        }
        normal += m.transpose() * m;
        rhs += m.transpose() * z;
    }
    let eig = normal.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
    if !(hi > 0.0) || lo <= RANK_TOL * hi {
        return Err(Error::Rank(format!("normal matrix eigenvalues in [{lo:e}, {hi:e}]")));
    }
    let ch = normal.cholesky().ok_or_else(|| Error::Rank("normal matrix is not positive definite".into()))?;
    Ok(ch.solve(&rhs))
}

/// `(a, b)` of `ẋ = a y`, `ẏ = b x` from samples, with `Mᵢ = diag(yᵢ, xᵢ)`.
pub fn estimate_ab(x: &[f64], y: &[f64], xdot: &[f64], ydot: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if y.len() != n || xdot.len() != n || ydot.len() != n {
        return Err(Error::DimensionMismatch("x, y, xdot, ydot lengths differ".into()));
    }
    let m: Vec<DMatrix<f64>> = (0..n).map(|i| DMatrix::from_row_slice(2, 2, &[y[i], 0.0, 0.0, x[i]])).collect();
    let z: Vec<DVector<f64>> = (0..n).map(|i| DVector::from_vec(vec![xdot[i], ydot[i]])).collect();
    let theta = estimate_theta_full(&m, &z)?;
    Ok((theta[0], theta[1]))
}

/// `a = Σ y ẋ / Σ y²`.
pub fn estimate_a_regression(xdot: &[f64], y: &[f64]) -> Result<f64> {
    if xdot.len() != y.len() || y.is_empty() {
        return Err(Error::DimensionMismatch("xdot and y must be nonempty and of equal length".into()));
    }
    let den: f64 = y.iter().map(|v| v * v).sum();
    if !(den > 0.0) {
        return Err(Error::DegenerateSample("Σy² = 0".into()));
    }
    Ok(y.iter().zip(xdot).map(|(a, b)| a * b).sum::<f64>() / den)
}

/// Observed `ẋ` with the regressor `y` known as mean and variance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionData {
    times: Vec<f64>,
    xdot: Vec<f64>,
    y_mean: Vec<f64>,
    y_var: Vec<f64>,
}

impl RegressionData {
    pub fn new(times: Vec<f64>, xdot: Vec<f64>, y_mean: Vec<f64>, y_var: Vec<f64>) -> Result<Self> {
        let n = times.len();
        if n == 0 || xdot.len() != n || y_mean.len() != n || y_var.len() != n {
            return Err(Error::DimensionMismatch("regression arrays must be nonempty and of equal length".into()));
        }
        if let Some(v) = y_var.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("negative variance {v}")));
        }
        Ok(Self { times, xdot, y_mean, y_var })
    }

    /// Same data with every variance replaced by `var`.
    pub fn with_uniform_variance(&self, var: f64) -> Result<Self> {
        Self::new(self.times.clone(), self.xdot.clone(), self.y_mean.clone(), vec![var; self.len()])
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn xdot(&self) -> &[f64] {
        &self.xdot
    }

    pub fn y_mean(&self) -> &[f64] {
        &self.y_mean
    }

    pub fn y_var(&self) -> &[f64] {
        &self.y_var
    }
}

/// `a = Σ⟨y⟩ẋ / Σ(⟨y⟩² + ⟨y′²⟩)`.
pub fn estimate_a_uncertain(data: &RegressionData) -> Result<f64> {
    let den: f64 = data.y_mean.iter().zip(&data.y_var).map(|(m, v)| m * m + v).sum();
    if !(den > 0.0) {
        return Err(Error::DegenerateSample("Σ(⟨y⟩² + var) = 0".into()));
    }
    Ok(data.y_mean.iter().zip(&data.xdot).map(|(m, x)| m * x).sum::<f64>() / den)
}

/// Regression estimates from independent draws of the regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct ASamples {
    pub a: Vec<f64>,
    /// `Σ yᵢ²` of each draw.
    pub denominators: Vec<f64>,
    /// `None` when all draws coincide.
    pub summary: Option<StatSummary>,
}

/// Draws `yᵢ ~ N(⟨yᵢ⟩, varᵢ)` independently and applies the plain regression
/// to each draw. The mean of the result generally matches neither the
/// regression at the mean nor [`estimate_a_uncertain`].
pub fn sample_a_distribution(data: &RegressionData, n_samples: usize, seed: u64) -> Result<ASamples> {
    if n_samples < 100 {
        return Err(Error::Size(format!("need at least 100 samples, got {n_samples}")));
    }
    let dists: Vec<Normal<f64>> = data
        .y_mean
        .iter()
        .zip(&data.y_var)
        .map(|(&m, &v)| Normal::new(m, v.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string())))
        .collect::<Result<_>>()?;
    let draws: Vec<(f64, f64)> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut r = rng::stream(seed, s as u64);
            let (mut num, mut den) = (0.0, 0.0);
            for (d, x) in dists.iter().zip(&data.xdot) {
                let y = d.sample(&mut r);
                num += y * x;
                den += y * y;
            }
            (num / den, den)
        })
        .collect();
    let (a, denominators): (Vec<f64>, Vec<f64>) = draws.into_iter().unzip();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSample("a draw gave Σy² = 0".into()));
    }
    let summary = if a.iter().all(|v| *v == a[0]) { None } else { Some(summary_stats(&a)?) };
    Ok(ASamples { a, denominators, summary })
}

/// Okubo-Weiss parameter and its parts on an `n × n` periodic grid
/// (row-major, `iy * n + ix`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OwField {
    pub n: usize,
    pub dx_space: f64,
    pub ow: Vec<f64>,
    pub s_n: Vec<f64>,
    pub s_s: Vec<f64>,
    pub omega: Vec<f64>,
}

/// `(s_n, s_s, ω, OW)` from velocity derivatives.
pub fn ow_from_gradient(g: &VelocityGradient) -> (f64, f64, f64, f64) {
    let [[ux, uy], [vx, vy]] = *g;
    let s_n = ux - vy;
    let s_s = vx + uy;
    let w = vx - uy;
    (s_n, s_s, w, s_n * s_n + s_s * s_s - w * w)
}

fn check_grid(n: usize, field: &[f64]) -> Result<()> {
    if n < 4 {
        return Err(Error::Size(format!("grid must be at least 4×4, got {n}")));
    }
    if field.len() != n * n {
        return Err(Error::GridMismatch(format!("{} values for an {n}×{n} grid", field.len())));
    }
    Ok(())
}

/// Central differences (periodic) on `u, v`.
pub fn ow_field(u: &[f64], v: &[f64], n: usize, dx_space: f64) -> Result<OwField> {
    check_grid(n, u)?;
    check_grid(n, v)?;
    if !(dx_space > 0.0) {
        return Err(Error::InvalidParameter(format!("grid spacing must be positive, got {dx_space}")));
    }
    let h2 = 2.0 * dx_space;
    let at = |f: &[f64], iy: usize, ix: usize| f[iy * n + ix];
    let mut out = OwField {
        n,
        dx_space,
        ow: vec![0.0; n * n],
        s_n: vec![0.0; n * n],
        s_s: vec![0.0; n * n],
        omega: vec![0.0; n * n],
    };
    for iy in 0..n {
        let (yp, ym) = ((iy + 1) % n, (iy + n - 1) % n);
        for ix in 0..n {
            let (xp, xm) = ((ix + 1) % n, (ix + n - 1) % n);
            let g = [
                [(at(u, iy, xp) - at(u, iy, xm)) / h2, (at(u, yp, ix) - at(u, ym, ix)) / h2],
                [(at(v, iy, xp) - at(v, iy, xm)) / h2, (at(v, yp, ix) - at(v, ym, ix)) / h2],
            ];
            let (a, b, c, d) = ow_from_gradient(&g);
            let i = iy * n + ix;
            out.s_n[i] = a;
            out.s_s[i] = b;
            out.omega[i] = c;
            out.ow[i] = d;
        }
    }
    Ok(out)
}

/// OW from exact derivatives of a spectral field on the grid
/// `x_j = -π + 2πj/n`.
pub fn ow_spectral(config: &FlowModelConfig, coeffs: &[Complex64], n: usize) -> Result<Vec<f64>> {
    let h = 2.0 * PI / n as f64;
    let pts: Vec<[f64; 2]> = (0..n * n).map(|i| [-PI + h * (i % n) as f64, -PI + h * (i / n) as f64]).collect();
    let grads = crate::dynamics::eval_velocity_gradient(config, coeffs, &pts)?;
    Ok(grads.iter().map(|g| ow_from_gradient(g).3).collect())
}

/// Sample average of OW versus OW of the sample mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedOw {
    pub n: usize,
    pub mean_ow: Vec<f64>,
    pub ow_of_mean: Vec<f64>,
    /// `E u_x′² − 2E u_x′v_y′ + E v_y′² + 4E v_x′u_y′` per cell.
    pub fluctuation: Vec<f64>,
    /// Largest `|mean_ow − ow_of_mean − fluctuation|`.
    pub residual: f64,
}

/// Moments are population averages over the samples.
pub fn expected_ow(samples: &[(Vec<f64>, Vec<f64>)], n: usize, dx_space: f64) -> Result<ExpectedOw> {
    if samples.len() < 2 {
        return Err(Error::Size(format!("need at least 2 flow samples, got {}", samples.len())));
    }
    let fields: Vec<OwField> = samples.iter().map(|(u, v)| ow_field(u, v, n, dx_space)).collect::<Result<_>>()?;
    let m = samples.len() as f64;
    let cells = n * n;
    let mut ubar = vec![0.0; cells];
    let mut vbar = vec![0.0; cells];
    for (u, v) in samples {
        for i in 0..cells {
            ubar[i] += u[i] / m;
            vbar[i] += v[i] / m;
        }
    }
    let mean_field = ow_field(&ubar, &vbar, n, dx_space)?;
    // u_x − v_y = s_n and v_x = (s_s + ω)/2, u_y = (s_s − ω)/2
    let mut mean_ow = vec![0.0; cells];
    let mut fluctuation = vec![0.0; cells];
    for f in &fields {
        for i in 0..cells {
            mean_ow[i] += f.ow[i] / m;
            let dsn = f.s_n[i] - mean_field.s_n[i];
            let dvx = 0.5 * ((f.s_s[i] - mean_field.s_s[i]) + (f.omega[i] - mean_field.omega[i]));
            let duy = 0.5 * ((f.s_s[i] - mean_field.s_s[i]) - (f.omega[i] - mean_field.omega[i]));
            fluctuation[i] += (dsn * dsn + 4.0 * dvx * duy) / m;
        }
    }
    let residual = (0..cells)
        .map(|i| (mean_ow[i] - mean_field.ow[i] - fluctuation[i]).abs())
        .fold(0.0, f64::max);
    Ok(ExpectedOw { n, mean_ow, ow_of_mean: mean_field.ow, fluctuation, residual })
}

/// Velocity fields drawn from the filter posterior at one record, with OW
/// per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorFlowSamples {
    pub n: usize,
    pub fields: Vec<(Vec<f64>, Vec<f64>)>,
    pub ow: Vec<Vec<f64>>,
}

impl PosteriorFlowSamples {
    /// Fraction of samples with `OW < threshold` in each cell.
    pub fn eddy_probability(&self, threshold: f64) -> Vec<f64> {
        let m = self.ow.len() as f64;
        (0..self.n * self.n)
            .map(|i| self.ow.iter().filter(|s| s[i] < threshold).count() as f64 / m)
            .collect()
    }

    /// Population variance of OW across samples, per cell.
    pub fn cell_variance(&self) -> Vec<f64> {
        let m = self.ow.len() as f64;
        (0..self.n * self.n)
            .map(|i| {
                let mean = self.ow.iter().map(|s| s[i]).sum::<f64>() / m;
                self.ow.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / m
            })
            .collect()
    }

    pub fn expected_ow(&self) -> Result<ExpectedOw> {
        expected_ow(&self.fields, self.n, 2.0 * PI / self.n as f64)
    }
}

/// Real coordinates `(Re û_k, Im û_k)` of the canonical modes.
fn real_coordinates(config: &FlowModelConfig) -> DMatrix<Complex64> {
    let canon = config.canonical_indices();
    let n = config.n_modes();
    let mut a = DMatrix::zeros(2 * canon.len(), n);
    let half = Complex64::new(0.5, 0.0);
    let mhalf_i = Complex64::new(0.0, -0.5);
    for (c, &i) in canon.iter().enumerate() {
        let j = config.mirror(i);
        a[(2 * c, i)] = half;
        a[(2 * c, j)] = half;
        a[(2 * c + 1, i)] = mhalf_i;
        a[(2 * c + 1, j)] = -mhalf_i;
    }
    a
}

/// Draws coefficient vectors from `N(μ, R)` of one filter record. The
/// canonical modes are sampled in real coordinates (whose covariance
/// `A R A*` is real under the reality condition) and the partners are
/// mirrored.
pub fn sample_posterior_flows(
    filter: &FilterTrajectory,
    config: &FlowModelConfig,
    record: usize,
    n_samples: usize,
    grid_n: usize,
    seed: u64,
) -> Result<PosteriorFlowSamples> {
    if record >= filter.n_records() || filter.n_modes() != config.n_modes() {
        return Err(Error::InvalidParameter(format!("record {record} unavailable for this configuration")));
    }
    if n_samples == 0 {
        return Err(Error::Size("need at least one sample".into()));
    }
    let a = real_coordinates(config);
    let m = (&a * filter.mean_at(record)).map(|z| z.re);
    let s = (&a * filter.cov_at(record) * a.adjoint()).map(|z| z.re);
    let dist = GaussianDist::new(m, s)?;
    let canon = config.canonical_indices();
    let dx = 2.0 * PI / grid_n as f64;
    let draws: Vec<((Vec<f64>, Vec<f64>), Vec<f64>)> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, k as u64);
            let x = dist.draw(&mut r);
            let mut coeffs = vec![Complex64::new(0.0, 0.0); config.n_modes()];
            for (c, &i) in canon.iter().enumerate() {
                coeffs[i] = Complex64::new(x[2 * c], x[2 * c + 1]);
            }
            config.mirror_fill(&mut coeffs);
            let (u, v) = velocity_on_grid(config, &coeffs, grid_n)?;
            let ow = ow_field(&u, &v, grid_n, dx)?.ow;
            Ok(((u, v), ow))
        })
        .collect::<Result<_>>()?;
    let (fields, ow) = draws.into_iter().unzip();
    Ok(PosteriorFlowSamples { n: grid_n, fields, ow })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate_flow, FlowInit, OuParams, TimeGrid};
    use crate::lada::{run_filter_with, simulate_tracers, ComplexGaussian, FilterOptions};

    fn oscillator(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        // x = sin 2t, y = cos 2t over 10 whole periods
        let t: Vec<f64> = (0..n).map(|i| 10.0 * PI * i as f64 / n as f64).collect();
        let x = t.iter().map(|t| (2.0 * t).sin()).collect();
        let y: Vec<f64> = t.iter().map(|t| (2.0 * t).cos()).collect();
        let xdot = y.iter().map(|y| 2.0 * y).collect();
        let ydot = t.iter().map(|t| -2.0 * (2.0 * t).sin()).collect();
        (t, x, y, xdot, ydot)
    }

    #[test]
    fn full_estimate_recovers_oscillator() {
        let (_, x, y, xdot, ydot) = oscillator(1000);
        let (a, b) = estimate_ab(&x, &y, &xdot, &ydot).unwrap();
        assert!((a - 2.0).abs() < 1e-8 && (b + 2.0).abs() < 1e-8);
    }

    #[test]
    fn two_point_regression() {
        assert!((estimate_a_regression(&[1.0, 2.0], &[1.0, 3.0]).unwrap() - 0.7).abs() < 1e-15);
        assert!((estimate_a_regression(&[1.5], &[0.5]).unwrap() - 3.0).abs() < 1e-15);
        let m = vec![DMatrix::from_row_slice(1, 1, &[1.0]), DMatrix::from_row_slice(1, 1, &[3.0])];
        let z = vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![2.0])];
        assert!((estimate_theta_full(&m, &z).unwrap()[0] - 0.7).abs() < 1e-15);
        let zero = vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])];
        assert!(matches!(
            estimate_theta_full(&zero, &[DVector::from_vec(vec![1.0, 1.0])]),
            Err(Error::Rank(_))
        ));
    }

    #[test]
    fn uncertain_estimate() {
        let (t, x, y, xdot, ydot) = oscillator(4000);
        let data = RegressionData::new(t, xdot.clone(), y.clone(), vec![0.0; y.len()]).unwrap();
        let a0 = estimate_a_uncertain(&data).unwrap();
        let (a_full, _) = estimate_ab(&x, &y, &xdot, &ydot).unwrap();
        assert!((a0 - a_full).abs() < 1e-12);
        for (r, expect) in [(0.5, 1.0), (1.0, 2.0 / 3.0), (2.0, 0.4)] {
            let a = estimate_a_uncertain(&data.with_uniform_variance(r).unwrap()).unwrap();
            assert!((a - expect).abs() < 1e-10, "r = {r}: {a}");
        }
        let a = estimate_a_uncertain(&data.with_uniform_variance(1e12).unwrap()).unwrap();
        assert!(a.abs() < 1e-10);
        let two = RegressionData::new(vec![0.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0], vec![10.0, 10.0]).unwrap();
        assert!((estimate_a_uncertain(&two).unwrap() - 7.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn sampled_a_distribution() {
        let exact = RegressionData::new(vec![0.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0], vec![0.0, 0.0]).unwrap();
        let s = sample_a_distribution(&exact, 200, 1).unwrap();
        assert!(s.a.iter().all(|a| (a - 0.7).abs() < 1e-15));
        assert!(s.summary.is_none());

        let noisy = exact.with_uniform_variance(10.0).unwrap();
        let s = sample_a_distribution(&noisy, 20_000, 1).unwrap();
        assert!(s.summary.unwrap().excess_kurtosis() > 1.0);
        let n = s.denominators.len() as f64;
        let mean = s.denominators.iter().sum::<f64>() / n;
        let sd = (s.denominators.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - 30.0).abs() < 3.0 * sd / n.sqrt());
        assert_eq!(s, sample_a_distribution(&noisy, 20_000, 1).unwrap());
        assert!(matches!(sample_a_distribution(&noisy, 10, 1), Err(Error::Size(_))));
    }

    #[test]
    fn analytic_ow_signs() {
        // u = −y, v = x and u = x, v = −y
        assert_eq!(ow_from_gradient(&[[0.0, -1.0], [1.0, 0.0]]), (0.0, 0.0, 2.0, -4.0));
        assert_eq!(ow_from_gradient(&[[1.0, 0.0], [0.0, -1.0]]).3, 4.0);
    }

    fn grid_field(n: usize, f: impl Fn(f64, f64) -> (f64, f64)) -> (Vec<f64>, Vec<f64>) {
        let h = 2.0 * PI / n as f64;
        (0..n * n)
            .map(|i| f(-PI + h * (i % n) as f64, -PI + h * (i / n) as f64))
            .unzip()
    }

    #[test]
    fn finite_differences_converge_to_spectral() {
        let p = OuParams { d: 0.5, omega: 0.0, f: Complex64::new(0.0, 0.0), sigma: 0.5 };
        let cfg = FlowModelConfig::homogeneous(2, p, 0.1).unwrap();
        let flow = simulate_flow(&cfg, TimeGrid::new(0.01, 1).unwrap(), &FlowInit::Equilibrium, 3).unwrap();
        let coeffs = flow.coeffs_at(0);
        let err = |n: usize| {
            let (u, v) = velocity_on_grid(&cfg, coeffs, n).unwrap();
            let fd = ow_field(&u, &v, n, 2.0 * PI / n as f64).unwrap();
            let ex = ow_spectral(&cfg, coeffs, n).unwrap();
            let scale = ex.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            fd.ow.iter().zip(&ex).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
        };
        let (e1, e2) = (err(32), err(64));
        // second order: halving the spacing divides the error by about 4
        assert!(e2 < 0.3 * e1, "{e1} {e2}");
        assert!(e2 < 0.02, "{e2}");
    }

    #[test]
    fn ow_field_invariants() {
        let n = 16;
        let (u, v) = grid_field(n, |x, y| (x.sin() * y.cos(), -x.cos() * y.sin()));
        let f = ow_field(&u, &v, n, 2.0 * PI / n as f64).unwrap();
        for i in 0..n * n {
            assert!((f.ow[i] - (f.s_n[i].powi(2) + f.s_s[i].powi(2) - f.omega[i].powi(2))).abs() < 1e-12);
        }
        let u2: Vec<f64> = u.iter().map(|x| x + 3.0).collect();
        let v2: Vec<f64> = v.iter().map(|x| x - 1.5).collect();
        let g = ow_field(&u2, &v2, n, 2.0 * PI / n as f64).unwrap();
        assert!(f.ow.iter().zip(&g.ow).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(matches!(ow_field(&[0.0; 9], &[0.0; 9], 3, 1.0), Err(Error::Size(_))));
    }

    #[test]
    fn expected_ow_identity() {
        let n = 8;
        let base = grid_field(n, |x, y| (x.sin() * y.cos(), -x.cos() * y.sin()));
        let pert = grid_field(n, |x, y| ((2.0 * y).cos(), (x + y).sin()));
        let same = expected_ow(&[base.clone(), base.clone()], n, 2.0 * PI / n as f64).unwrap();
        assert_eq!(same.mean_ow, same.ow_of_mean);
        let plus = (
            base.0.iter().zip(&pert.0).map(|(a, b)| a + b).collect(),
            base.1.iter().zip(&pert.1).map(|(a, b)| a + b).collect(),
        );
        let minus = (
            base.0.iter().zip(&pert.0).map(|(a, b)| a - b).collect(),
            base.1.iter().zip(&pert.1).map(|(a, b)| a - b).collect(),
        );
        let e = expected_ow(&[plus, minus], n, 2.0 * PI / n as f64).unwrap();
        assert!(e.residual < 1e-12);
        assert!(expected_ow(&[base], n, 1.0).is_err());
    }

    #[test]
    fn posterior_samples() {
        let cfg = FlowModelConfig::reference();
        let grid = TimeGrid::new(1e-3, 2000).unwrap();
        let flow = simulate_flow(&cfg, grid, &FlowInit::Equilibrium, 1).unwrap();
        let tr = simulate_tracers(&flow, 3, None, 1).unwrap();
        let init = ComplexGaussian::isotropic(DVector::zeros(24), 1e-4).unwrap();
        let f = run_filter_with(&tr, &cfg, &init, FilterOptions { stride: 500 }).unwrap();
        let last = f.n_records() - 1;
        let s = sample_posterior_flows(&f, &cfg, last, 50, 16, 2).unwrap();
        let p = s.eddy_probability(0.0);
        assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        for (i, pi) in p.iter().enumerate() {
            if s.ow.iter().all(|o| o[i] < 0.0) {
                assert_eq!(*pi, 1.0);
            }
        }
        assert!(s.expected_ow().unwrap().residual < 1e-10);

        // record 0 has covariance 1e-4·I; shrink it to zero through a copy
        let zero_cov = ComplexGaussian::isotropic(f.mean_at(last), 0.0).unwrap();
        let g = run_filter_with(&tr.take(1).unwrap(), &cfg, &zero_cov, FilterOptions { stride: 2000 }).unwrap();
        let z = sample_posterior_flows(&g, &cfg, 0, 5, 8, 3).unwrap();
        let (um, vm) = velocity_on_grid(&cfg, g.mean_slice(0), 8).unwrap();
        for (u, v) in &z.fields {
            assert!(u.iter().zip(&um).chain(v.iter().zip(&vm)).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }
}
