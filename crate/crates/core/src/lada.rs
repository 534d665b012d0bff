//! Lagrangian data assimilation: tracers advected by a spectral random flow
//! and the closed-form conditional-Gaussian filter for the Fourier
//! coefficients given the observed tracer paths.
//!
//! The filter integrates, with forward Euler and the observed increment
//! `Δx` in place of `dx`,
//!
//! ```text
//! dμ = (f − Γμ) dt + R P* (dx − P μ dt) / σx²
//! dR = [−ΓR − RΓ* + ΣΣ* − R P* P R / σx²] dt,   Γ = diag(d − iω)
//! ```
//!
//! where `P(x)` stacks `e^{ik·x_l} r_k` for every tracer.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{velocity_on_grid, wrap_angle, FlowModelConfig, SpectralFlowSeries, TimeGrid};
use crate::error::{Error, Result};
use crate::info::relative_entropy_complex;
use crate::rng;

const HERMITIAN_TOL: f64 = 1e-10;
/// Smallest eigenvalue tolerated in a filter covariance.
pub const PSD_TOL: f64 = 1e-8;
const TRACER_TAG: u64 = 0x7472_6163;

type CMatrix = DMatrix<Complex64>;
type CVector = DVector<Complex64>;

fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Paths of `L` tracers, `(steps+1) × L` positions in `(-π, π]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct TracerSet {
    grid: TimeGrid,
    n_tracers: usize,
    sigma_x: f64,
    positions: Vec<[f64; 2]>,
}

impl TracerSet {
    pub fn new(grid: TimeGrid, n_tracers: usize, sigma_x: f64, positions: Vec<[f64; 2]>) -> Result<Self> {
        if n_tracers == 0 || positions.len() != (grid.steps + 1) * n_tracers {
            return Err(Error::DimensionMismatch(format!(
                "{} positions for {} tracers over {} steps",
                positions.len(),
                n_tracers,
                grid.steps
            )));
        }
        let positions = positions.into_iter().map(|p| [wrap_angle(p[0]), wrap_angle(p[1])]).collect();
        Ok(Self { grid, n_tracers, sigma_x, positions })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_tracers(&self) -> usize {
        self.n_tracers
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    /// Positions of all tracers at one step.
    pub fn at(&self, step: usize) -> &[[f64; 2]] {
        &self.positions[step * self.n_tracers..(step + 1) * self.n_tracers]
    }

    pub fn position(&self, step: usize, tracer: usize) -> [f64; 2] {
        self.positions[step * self.n_tracers + tracer]
    }

    /// Displacement from `step` to `step + 1`, unwrapped across the boundary.
    pub fn increment(&self, step: usize, tracer: usize) -> [f64; 2] {
        let a = self.position(step, tracer);
        let b = self.position(step + 1, tracer);
        [wrap_angle(b[0] - a[0]), wrap_angle(b[1] - a[1])]
    }

    /// The first `l` tracers.
    pub fn take(&self, l: usize) -> Result<Self> {
        if l == 0 || l > self.n_tracers {
            return Err(Error::InvalidParameter(format!("cannot take {l} of {} tracers", self.n_tracers)));
        }
        let positions = (0..=self.grid.steps).flat_map(|t| self.at(t)[..l].to_vec()).collect();
        Ok(Self { grid: self.grid, n_tracers: l, sigma_x: self.sigma_x, positions })
    }
}

fn velocity_at(config: &FlowModelConfig, coeffs: &[Complex64], x: [f64; 2]) -> [f64; 2] {
    let mut u = [0.0; 2];
    for ((k, r), c) in config.modes().iter().zip(config.eigvecs()).zip(coeffs) {
        let a = c * Complex64::from_polar(1.0, k[0] as f64 * x[0] + k[1] as f64 * x[1]);
        u[0] += (a * r[0]).re;
        u[1] += (a * r[1]).re;
    }
    u
}

/// Euler-Maruyama for `dx_l = u(x_l, t) dt + σ_x dW_l`, wrapped each step.
///
/// Tracer `l` draws from its own stream of `seed`, so the first `L` tracers
/// of a larger run coincide with a run of `L` tracers. Without `x0` the
/// starting points are uniform over the domain.
pub fn simulate_tracers(
    flow: &SpectralFlowSeries,
    n_tracers: usize,
    x0: Option<&[[f64; 2]]>,
    seed: u64,
) -> Result<TracerSet> {
    if n_tracers == 0 {
        return Err(Error::InvalidParameter("need at least one tracer".into()));
    }
    if let Some(x0) = x0 {
        if x0.len() != n_tracers {
            return Err(Error::DimensionMismatch(format!(
                "{} initial positions for {n_tracers} tracers",
                x0.len()
            )));
        }
    }
    let config = flow.config();
    let grid = flow.grid();
    let sigma_x = config.sigma_x();
    let noise = sigma_x * grid.dt.sqrt();
    let tracer_seed = rng::derive(seed, TRACER_TAG);
    let paths: Vec<Vec<[f64; 2]>> = (0..n_tracers)
        .into_par_iter()
        .map(|l| {
            let mut r = rng::stream(tracer_seed, l as u64);
            let start = match x0 {
                Some(x0) => x0[l],
                None => [
                    wrap_angle(r.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
                    wrap_angle(r.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
                ],
            };
            let mut x = [wrap_angle(start[0]), wrap_angle(start[1])];
            let mut path = Vec::with_capacity(grid.steps + 1);
            path.push(x);
            for t in 0..grid.steps {
                let u = velocity_at(config, flow.coeffs_at(t), x);
                for c in 0..2 {
                    let xi: f64 = r.sample(StandardNormal);
                    x[c] = wrap_angle(x[c] + u[c] * grid.dt + noise * xi);
                }
                path.push(x);
            }
            path
        })
        .collect();
    let mut positions = Vec::with_capacity((grid.steps + 1) * n_tracers);
    for t in 0..=grid.steps {
        positions.extend(paths.iter().map(|p| p[t]));
    }
    Ok(TracerSet { grid, n_tracers, sigma_x, positions })
}

/// `e^{ik·x_l}` for every tracer (rows) and mode (columns).
fn phases(config: &FlowModelConfig, positions: &[[f64; 2]]) -> CMatrix {
    CMatrix::from_fn(positions.len(), config.n_modes(), |l, j| {
        let k = config.modes()[j];
        let x = positions[l];
        Complex64::from_polar(1.0, k[0] as f64 * x[0] + k[1] as f64 * x[1])
    })
}

/// Observation matrix `P(x)`, `2L × n_modes`: rows `2l` and `2l+1` hold the
/// two components of `e^{ik·x_l} r_k`.
pub fn build_projection(positions: &[[f64; 2]], config: &FlowModelConfig) -> Result<CMatrix> {
    if positions.is_empty() {
        return Err(Error::DimensionMismatch("no tracer positions".into()));
    }
    let e = phases(config, positions);
    let r = config.eigvecs();
    Ok(CMatrix::from_fn(2 * positions.len(), config.n_modes(), |row, j| e[(row / 2, j)] * r[j][row % 2]))
}

/// Circular complex Gaussian over the Fourier coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGaussian {
    mean: CVector,
    cov: CMatrix,
}

impl ComplexGaussian {
    pub fn new(mean: CVector, cov: CMatrix) -> Result<Self> {
        let n = mean.len();
        if cov.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!("mean length {n}, covariance {:?}", cov.shape())));
        }
        let scale = cov.iter().fold(1.0f64, |m, z| m.max(z.norm()));
        let asym = (&cov - cov.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if asym > HERMITIAN_TOL * scale {
            return Err(Error::NotSymmetric(format!("covariance is not Hermitian (residual {asym:e})")));
        }
        let cov = (&cov + cov.adjoint()) * Complex64::new(0.5, 0.0);
        let min = min_eigenvalue(&cov);
        if min < -PSD_TOL {
            return Err(Error::NotPositiveSemiDefinite(format!("min eigenvalue {min:e}")));
        }
        Ok(Self { mean, cov })
    }

    /// Independent modes at their OU equilibrium.
    pub fn equilibrium(config: &FlowModelConfig) -> Self {
        let mean = CVector::from_vec(config.equilibrium_mean());
        let var = config.equilibrium_variance();
        let cov = CMatrix::from_fn(var.len(), var.len(), |i, j| if i == j { Complex64::new(var[i], 0.0) } else { czero() });
        Self { mean, cov }
    }

    /// Mean `mean` with covariance `var · I`.
    pub fn isotropic(mean: CVector, var: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, CMatrix::identity(n, n) * Complex64::new(var, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &CVector {
        &self.mean
    }

    pub fn cov(&self) -> &CMatrix {
        &self.cov
    }
}

fn min_eigenvalue(cov: &CMatrix) -> f64 {
    cov.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Posterior means and covariances at the recorded steps
/// (`0, stride, 2·stride, …`).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrajectory {
    grid: TimeGrid,
    stride: usize,
    n_modes: usize,
    mean: Vec<Complex64>,
    cov: Vec<Complex64>,
}

impl FilterTrajectory {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_records(&self) -> usize {
        self.mean.len() / self.n_modes
    }

    /// Model step of record `i`.
    pub fn step(&self, i: usize) -> usize {
        i * self.stride
    }

    pub fn time(&self, i: usize) -> f64 {
        self.grid.t(self.step(i))
    }

    pub fn mean_slice(&self, i: usize) -> &[Complex64] {
        &self.mean[i * self.n_modes..(i + 1) * self.n_modes]
    }

    pub fn mean_at(&self, i: usize) -> CVector {
        CVector::from_column_slice(self.mean_slice(i))
    }

    pub fn cov_at(&self, i: usize) -> CMatrix {
        let n2 = self.n_modes * self.n_modes;
        CMatrix::from_column_slice(self.n_modes, self.n_modes, &self.cov[i * n2..(i + 1) * n2])
    }

    /// Posterior variance `R_kk` of one mode.
    pub fn variance(&self, i: usize, mode: usize) -> f64 {
        let n = self.n_modes;
        self.cov[i * n * n + mode * n + mode].re
    }

    /// Records whose step lies in the second half of the run.
    pub fn stationary_records(&self) -> std::ops::Range<usize> {
        let first = (self.grid.steps / 2).div_ceil(self.stride);
        first..self.n_records()
    }
}

/// Integration options for [`run_filter_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterOptions {
    /// Record every `stride`-th step.
    pub stride: usize,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

/// Runs the filter recording every step.
pub fn run_filter(tracers: &TracerSet, config: &FlowModelConfig, init: &ComplexGaussian) -> Result<FilterTrajectory> {
    run_filter_with(tracers, config, init, FilterOptions::default())
}

pub fn run_filter_with(
    tracers: &TracerSet,
    config: &FlowModelConfig,
    init: &ComplexGaussian,
    opts: FilterOptions,
) -> Result<FilterTrajectory> {
    let n = config.n_modes();
    if init.dim() != n {
        return Err(Error::DimensionMismatch(format!("prior has {} modes, config {n}", init.dim())));
    }
    if opts.stride == 0 {
        return Err(Error::InvalidParameter("stride must be positive".into()));
    }
    let sx2 = config.sigma_x() * config.sigma_x();
    if !(sx2 > 0.0) {
        return Err(Error::InvalidParameter("the filter needs positive tracer noise".into()));
    }
    let grid = tracers.grid();
    let dt = grid.dt;
    let dtc = Complex64::new(dt, 0.0);
    let gamma: Vec<Complex64> = config.params().iter().map(|p| -p.drift()).collect();
    let forcing: Vec<Complex64> = config.params().iter().map(|p| p.f).collect();
    let q: Vec<f64> = config.params().iter().map(|p| p.sigma * p.sigma).collect();
    let r = config.eigvecs();
    // r_j* r_k
    let rr = CMatrix::from_fn(n, n, |j, k| r[j][0].conj() * r[k][0] + r[j][1].conj() * r[k][1]);

    let n_rec = grid.steps / opts.stride + 1;
    let mut out = FilterTrajectory {
        grid,
        stride: opts.stride,
        n_modes: n,
        mean: Vec::with_capacity(n_rec * n),
        cov: Vec::with_capacity(n_rec * n * n),
    };
    let mut mu = init.mean.clone();
    let mut cov = init.cov.clone();
    let mut shifted = CMatrix::zeros(n, n);
    for t in 0..=grid.steps {
        if t % opts.stride == 0 {
            out.mean.extend(mu.iter());
            out.cov.extend(cov.iter());
        }
        if t == grid.steps {
            break;
        }
        let e = phases(config, tracers.at(t));
        // P*P = (r_j* r_k) Σ_l conj(e_lj) e_lk
        let ptp = (e.adjoint() * &e).component_mul(&rr);
        // P*(Δx − Pμ dt)
        let mut innov = CVector::zeros(n);
        for l in 0..tracers.n_tracers() {
            let dx = tracers.increment(t, l);
            let mut pu = [czero(); 2];
            for k in 0..n {
                let a = e[(l, k)] * mu[k];
                pu[0] += a * r[k][0];
                pu[1] += a * r[k][1];
            }
            let y = [Complex64::new(dx[0], 0.0) - pu[0] * dtc, Complex64::new(dx[1], 0.0) - pu[1] * dtc];
            for k in 0..n {
                innov[k] += e[(l, k)].conj() * (r[k][0].conj() * y[0] + r[k][1].conj() * y[1]);
            }
        }
        let gain_term = &cov * innov / Complex64::new(sx2, 0.0);
        let rpr = &cov * ptp * &cov / Complex64::new(sx2, 0.0);
        let mut next_mu = mu.clone();
        for k in 0..n {
            next_mu[k] += (forcing[k] - gamma[k] * mu[k]) * dtc + gain_term[k];
        }
        let mut next = cov.clone();
        for j in 0..n {
            for k in 0..n {
                let mut d = -(gamma[j] + gamma[k].conj()) * cov[(j, k)] - rpr[(j, k)];
                if j == k {
                    d += q[j];
                }
                next[(j, k)] += d * dtc;
            }
        }
        cov = (&next + next.adjoint()) * Complex64::new(0.5, 0.0);
        mu = next_mu;
        if !mu.iter().chain(cov.iter()).all(|z| z.is_finite()) {
            return Err(Error::Instability { step: t + 1, min_eig: f64::NAN });
        }
        shifted.copy_from(&cov);
        for j in 0..n {
            shifted[(j, j)] += PSD_TOL;
        }
        if shifted.clone().cholesky().is_none() {
            let min_eig = min_eigenvalue(&cov);
            if min_eig < -PSD_TOL {
                return Err(Error::Instability { step: t + 1, min_eig });
            }
        }
    }
    Ok(out)
}

/// Time-averaged information gain of the posterior over the equilibrium
/// prior, over the second half of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UncertaintyReduction {
    /// Signal part with the posterior mean.
    pub signal: f64,
    pub dispersion: f64,
    /// Signal part with the true coefficients in place of the posterior
    /// mean, the large-`L` limit of `signal`.
    pub signal_truth: f64,
    pub records: usize,
}

pub fn uncertainty_reduction(
    filter: &FilterTrajectory,
    config: &FlowModelConfig,
    truth: &SpectralFlowSeries,
) -> Result<UncertaintyReduction> {
    let n = config.n_modes();
    if filter.n_modes() != n || truth.config().n_modes() != n || truth.n_steps() < filter.grid().steps {
        return Err(Error::DimensionMismatch("filter, config and truth disagree".into()));
    }
    let window = filter.stationary_records();
    if window.len() < 10 {
        return Err(Error::Window(window.len()));
    }
    let prior = ComplexGaussian::equilibrium(config);
    let (mut signal, mut dispersion, mut signal_truth) = (0.0, 0.0, 0.0);
    for i in window.clone() {
        let cov = filter.cov_at(i);
        let kl = relative_entropy_complex(&filter.mean_at(i), &cov, &prior.mean, &prior.cov)?;
        let u = CVector::from_column_slice(truth.coeffs_at(filter.step(i)));
        let kt = relative_entropy_complex(&u, &prior.cov, &prior.mean, &prior.cov)?;
        signal += kl.signal;
        dispersion += kl.dispersion;
        signal_truth += kt.signal;
    }
    let m = window.len() as f64;
    Ok(UncertaintyReduction {
        signal: signal / m,
        dispersion: dispersion / m,
        signal_truth: signal_truth / m,
        records: window.len(),
    })
}

/// Root-mean-square error of the posterior mean of one mode over the second
/// half of the run.
pub fn posterior_rmse(filter: &FilterTrajectory, truth: &SpectralFlowSeries, mode: usize) -> Result<f64> {
    let window = filter.stationary_records();
    if window.is_empty() {
        return Err(Error::Window(0));
    }
    if mode >= filter.n_modes() {
        return Err(Error::InvalidParameter(format!("mode index {mode} out of range")));
    }
    let m = window.len() as f64;
    let sum: f64 = window
        .map(|i| (filter.mean_slice(i)[mode] - truth.coeff(filter.step(i), mode)).norm_sqr())
        .sum();
    Ok((sum / m).sqrt())
}

/// Mean velocity field of record `i` on the `n × n` grid (row-major
/// `(u, v)`).
pub fn reconstruct_flow(
    filter: &FilterTrajectory,
    config: &FlowModelConfig,
    record: usize,
    grid_n: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if record >= filter.n_records() {
        return Err(Error::InvalidParameter(format!(
            "record {record} outside 0..{}",
            filter.n_records()
        )));
    }
    velocity_on_grid(config, filter.mean_slice(record), grid_n)
}
