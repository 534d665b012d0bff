//! Forward models and ensemble machinery.
//!
//! Deterministic ODEs are integrated with classical RK4, SDEs with
//! Euler-Maruyama. Ensemble members are independent given
//! `(seed, member index)` and are simulated in parallel; the output does not
//! depend on the number of threads.

mod flow;

pub use flow::{
    eval_velocity, eval_velocity_coeffs, eval_velocity_gradient, simulate_flow, velocity_on_grid,
    wrap_angle, FlowInit, FlowModelConfig, SpectralFlowSeries, VelocityGradient,
};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::GaussianDist;
use crate::rng;

/// States larger than this are treated as a numerical explosion.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;

/// Uniform time stepping `t_i = i * dt`, `i = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || steps == 0 {
            return Err(Error::InvalidParameter(format!(
                "time grid needs dt > 0 and steps >= 1, got dt = {dt}, steps = {steps}"
            )));
        }
        Ok(Self { dt, steps })
    }

    /// Grid covering `[0, horizon]` (rounded to the nearest whole step).
    pub fn with_horizon(dt: f64, horizon: f64) -> Result<Self> {
        Self::new(dt, (horizon / dt).round() as usize)
    }

    pub fn t(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.t(self.steps)
    }
}

/// Trajectories of `n_member` realizations of one model.
///
/// Every `stride`-th step is stored, so there are `steps / stride + 1`
/// stored times. Layout is member-major: `[member][time][state]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    grid: TimeGrid,
    stride: usize,
    n_member: usize,
    state_dim: usize,
    data: Vec<f64>,
}

impl Ensemble {
    pub fn from_members(
        grid: TimeGrid,
        stride: usize,
        state_dim: usize,
        members: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Size("ensemble needs at least one member".into()));
        }
        let n_times = grid.steps / stride + 1;
        if members.iter().any(|m| m.len() != n_times * state_dim) {
            return Err(Error::DimensionMismatch("member trajectories differ in length".into()));
        }
        let n_member = members.len();
        let data: Vec<f64> = members.into_iter().flatten().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("ensemble contains non-finite values".into()));
        }
        Ok(Self { grid, stride, n_member, state_dim, data })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_member(&self) -> usize {
        self.n_member
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn n_times(&self) -> usize {
        self.grid.steps / self.stride + 1
    }

    pub fn time(&self, t_index: usize) -> f64 {
        self.grid.t(t_index * self.stride)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_times()).map(|i| self.time(i)).collect()
    }

    pub fn get(&self, member: usize, t_index: usize, dim: usize) -> f64 {
        self.data[(member * self.n_times() + t_index) * self.state_dim + dim]
    }

    /// The state of one member at one stored time.
    pub fn state(&self, member: usize, t_index: usize) -> &[f64] {
        let start = (member * self.n_times() + t_index) * self.state_dim;
        &self.data[start..start + self.state_dim]
    }

    /// Values of `dim` across members at one stored time.
    pub fn slice(&self, t_index: usize, dim: usize) -> Vec<f64> {
        (0..self.n_member).map(|m| self.get(m, t_index, dim)).collect()
    }
}

/// Per-time ensemble moments, each `n_times × state_dim` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub state_dim: usize,
    /// `⟨x⟩`
    pub mean: Vec<f64>,
    /// `⟨(x')²⟩` with the population (1/n) convention.
    pub variance: Vec<f64>,
    /// `⟨x²⟩`
    pub second_moment: Vec<f64>,
}

impl EnsembleStats {
    pub fn mean_at(&self, t_index: usize, dim: usize) -> f64 {
        self.mean[t_index * self.state_dim + dim]
    }

    pub fn variance_at(&self, t_index: usize, dim: usize) -> f64 {
        self.variance[t_index * self.state_dim + dim]
    }
}

/// Reynolds decomposition of the ensemble at every stored time.
pub fn ensemble_stats(e: &Ensemble) -> Result<EnsembleStats> {
    if e.n_member < 2 {
        return Err(Error::Size("ensemble variance needs at least two members".into()));
    }
    let (nt, dim) = (e.n_times(), e.state_dim);
    let n = e.n_member as f64;
    let mut mean = vec![0.0; nt * dim];
    let mut second_moment = vec![0.0; nt * dim];
    for m in 0..e.n_member {
        for t in 0..nt {
            for (d, &x) in e.state(m, t).iter().enumerate() {
                mean[t * dim + d] += x;
                second_moment[t * dim + d] += x * x;
            }
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    second_moment.iter_mut().for_each(|v| *v /= n);
    let mut variance = vec![0.0; nt * dim];
    for m in 0..e.n_member {
        for t in 0..nt {
            for (d, &x) in e.state(m, t).iter().enumerate() {
                variance[t * dim + d] += (x - mean[t * dim + d]).powi(2);
            }
        }
    }
    variance.iter_mut().for_each(|v| *v /= n);
    Ok(EnsembleStats { times: e.times(), state_dim: dim, mean, variance, second_moment })
}

/// Initial condition for an ensemble.
#[derive(Debug, Clone)]
pub enum InitialCondition {
    Point(Vec<f64>),
    Gaussian(GaussianDist),
}

impl InitialCondition {
    fn dim(&self) -> usize {
        match self {
            InitialCondition::Point(x) => x.len(),
            InitialCondition::Gaussian(g) => g.dim(),
        }
    }

    fn draw(&self, seed: u64, member: usize) -> Vec<f64> {
        match self {
            InitialCondition::Point(x) => x.clone(),
            InitialCondition::Gaussian(g) => {
                g.draw(&mut rng::stream(seed, member as u64)).as_slice().to_vec()
            }
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            InitialCondition::Point(x) => x.clone(),
            InitialCondition::Gaussian(g) => g.mean().as_slice().to_vec(),
        }
    }
}

/// Solution of `dx/dt = -a x + f`: `x0 e^{-at} + (1 - e^{-at}) f/a`.
pub fn linear_analytic(a: f64, f: f64, x0: f64, t: f64) -> f64 {
    let decay = (-a * t).exp();
    x0 * decay + (1.0 - decay) * f / a
}

/// Ensemble of the damped linear model, each member evaluated exactly from
/// its sampled initial value.
pub fn simulate_linear_ensemble(
    a: f64,
    f: f64,
    init: &InitialCondition,
    grid: TimeGrid,
    n_member: usize,
    seed: u64,
) -> Result<Ensemble> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("damping must be positive, got {a}")));
    }
    if init.dim() != 1 {
        return Err(Error::DimensionMismatch("linear model is scalar".into()));
    }
    let members = (0..n_member)
        .into_par_iter()
        .map(|m| {
            let x0 = init.draw(seed, m)[0];
            (0..=grid.steps).map(|i| linear_analytic(a, f, x0, grid.t(i))).collect()
        })
        .collect();
    Ensemble::from_members(grid, 1, 1, members)
}

/// One classical Runge-Kutta step for an autonomous ODE.
pub fn rk4_step<F>(rhs: &F, x: &mut [f64], dt: f64, scratch: &mut [Vec<f64>; 5])
where
    F: Fn(&[f64], &mut [f64]),
{
    let [k1, k2, k3, k4, tmp] = scratch;
    rhs(x, k1);
    tmp.iter_mut().zip(x.iter()).zip(k1.iter()).for_each(|((t, x), k)| *t = x + 0.5 * dt * k);
    rhs(tmp, k2);
    tmp.iter_mut().zip(x.iter()).zip(k2.iter()).for_each(|((t, x), k)| *t = x + 0.5 * dt * k);
    rhs(tmp, k3);
    tmp.iter_mut().zip(x.iter()).zip(k3.iter()).for_each(|((t, x), k)| *t = x + dt * k);
    rhs(tmp, k4);
    for i in 0..x.len() {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn check_finite(x: &[f64], step: usize) -> Result<()> {
    let magnitude = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !magnitude.is_finite() || magnitude > BLOW_UP_THRESHOLD {
        return Err(Error::BlowUp { step, magnitude });
    }
    Ok(())
}

/// RK4 trajectory of an autonomous ODE, storing every `stride`-th state.
pub fn integrate_ode<F>(rhs: &F, x0: &[f64], grid: TimeGrid, stride: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut scratch = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut out = Vec::with_capacity((grid.steps / stride + 1) * n);
    out.extend_from_slice(&x);
    for step in 1..=grid.steps {
        rk4_step(rhs, &mut x, grid.dt, &mut scratch);
        check_finite(&x, step)?;
        if step % stride == 0 {
            out.extend_from_slice(&x);
        }
    }
    Ok(out)
}

/// Ensemble of an autonomous ODE from sampled initial conditions.
pub fn simulate_ode_ensemble<F>(
    rhs: F,
    init: &InitialCondition,
    grid: TimeGrid,
    stride: usize,
    n_member: usize,
    seed: u64,
) -> Result<Ensemble>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    if stride == 0 {
        return Err(Error::InvalidParameter("output stride must be >= 1".into()));
    }
    let members = (0..n_member)
        .into_par_iter()
        .map(|m| integrate_ode(&rhs, &init.draw(seed, m), grid, stride))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::from_members(grid, stride, init.dim(), members)
}

/// Lorenz-63 parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L63Params {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl L63Params {
    pub const STANDARD: L63Params = L63Params { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0 };

    pub fn rhs(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * (x[1] - x[0]);
        out[1] = x[0] * (self.rho - x[2]) - x[1];
        out[2] = x[0] * x[1] - self.beta * x[2];
    }
}

impl Default for L63Params {
    fn default() -> Self {
        Self::STANDARD
    }
}

/// RK4 trajectory of Lorenz-63; one `[x, y, z]` per step.
pub fn simulate_l63(params: &L63Params, x0: [f64; 3], grid: TimeGrid) -> Result<Vec<[f64; 3]>> {
    let flat = integrate_ode(&|x: &[f64], o: &mut [f64]| params.rhs(x, o), &x0, grid, 1)?;
    Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

pub fn simulate_l63_ensemble(
    params: &L63Params,
    init: &GaussianDist,
    grid: TimeGrid,
    stride: usize,
    n_member: usize,
    seed: u64,
) -> Result<Ensemble> {
    if init.dim() != 3 {
        return Err(Error::DimensionMismatch("Lorenz-63 state is three-dimensional".into()));
    }
    let p = *params;
    simulate_ode_ensemble(
        move |x: &[f64], o: &mut [f64]| p.rhs(x, o),
        &InitialCondition::Gaussian(init.clone()),
        grid,
        stride,
        n_member,
        seed,
    )
}

/// Complex Ornstein-Uhlenbeck mode
/// `du = [(-d + iω) u + f] dt + σ dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub d: f64,
    pub omega: f64,
    pub f: Complex64,
    pub sigma: f64,
}

impl OuParams {
    pub fn new(d: f64, omega: f64, f: Complex64, sigma: f64) -> Result<Self> {
        let p = Self { d, omega, f, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0 && self.sigma >= 0.0 && self.omega.is_finite() && self.f.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "OU mode needs d > 0 and sigma >= 0, got d = {}, sigma = {}",
                self.d, self.sigma
            )));
        }
        Ok(())
    }

    /// Drift coefficient `-d + iω`.
    pub fn drift(&self) -> Complex64 {
        Complex64::new(-self.d, self.omega)
    }

    /// Parameters of the conjugate mode.
    pub fn conj(&self) -> Self {
        Self { d: self.d, omega: -self.omega, f: self.f.conj(), sigma: self.sigma }
    }

    /// `f / (d - iω)`
    pub fn equilibrium_mean(&self) -> Complex64 {
        self.f / Complex64::new(self.d, -self.omega)
    }

    /// `E|u - mean|² = σ² / (2d)`
    pub fn equilibrium_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.d)
    }
}

/// Complex white-noise increment with `E|dW|² = dt`.
pub(crate) fn complex_increment(r: &mut rng::Rng, sqrt_half_dt: f64) -> Complex64 {
    Complex64::new(
        sqrt_half_dt * r.sample::<f64, _>(StandardNormal),
        sqrt_half_dt * r.sample::<f64, _>(StandardNormal),
    )
}

pub(crate) fn ou_step(p: &OuParams, u: Complex64, dt: f64, dw: Complex64) -> Complex64 {
    u + (p.drift() * u + p.f) * dt + p.sigma * dw
}

/// Euler-Maruyama path of one complex OU mode.
pub fn simulate_ou(params: &OuParams, u0: Complex64, grid: TimeGrid, seed: u64) -> Result<Vec<Complex64>> {
    params.validate()?;
    let mut r = rng::rng(seed);
    let s = (0.5 * grid.dt).sqrt();
    let mut u = u0;
    let mut out = Vec::with_capacity(grid.steps + 1);
    out.push(u);
    for _ in 0..grid.steps {
        u = ou_step(params, u, grid.dt, complex_increment(&mut r, s));
        out.push(u);
    }
    Ok(out)
}

/// Euler-Maruyama path of the real OU process `dx = (-a x + f) dt + σ dW`.
pub fn simulate_real_ou(a: f64, f: f64, sigma: f64, x0: f64, grid: TimeGrid, seed: u64) -> Result<Vec<f64>> {
    if !(a > 0.0) || !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "real OU needs a > 0 and sigma >= 0, got a = {a}, sigma = {sigma}"
        )));
    }
    let mut r = rng::rng(seed);
    let s = grid.dt.sqrt();
    let mut x = x0;
    let mut out = Vec::with_capacity(grid.steps + 1);
    out.push(x);
    for _ in 0..grid.steps {
        x += (f - a * x) * grid.dt + sigma * s * r.sample::<f64, _>(StandardNormal);
        out.push(x);
    }
    Ok(out)
}

/// One-dimensional reduced climate model with cubic drift and correlated
/// additive/multiplicative noise:
/// `dx = (f + a x + b x² − c x³) dt + (A − B x) dW_M + σ dW_A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub f: f64,
    pub mult_a: f64,
    pub mult_b: f64,
    pub sigma: f64,
}

/// The four dynamical regimes of the cubic model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CubicRegime {
    NearlyGaussian,
    HighlySkewed,
    FatTailed,
    Bimodal,
}

impl CubicRegime {
    pub const ALL: [CubicRegime; 4] = [
        CubicRegime::NearlyGaussian,
        CubicRegime::HighlySkewed,
        CubicRegime::FatTailed,
        CubicRegime::Bimodal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CubicRegime::NearlyGaussian => "nearly-gaussian",
            CubicRegime::HighlySkewed => "highly-skewed",
            CubicRegime::FatTailed => "fat-tailed",
            CubicRegime::Bimodal => "bimodal",
        }
    }

    pub fn params(&self) -> CubicParams {
        let (a, b, c, f, mult_a, mult_b, sigma) = match self {
            CubicRegime::NearlyGaussian => (-2.2, 0.0, 0.0, 2.0, 0.1, 0.1, 1.0),
            CubicRegime::HighlySkewed => (-4.0, 2.0, 1.0, 0.1, 1.0, -1.0, 1.0),
            CubicRegime::FatTailed => (-3.0, -1.5, 0.5, 0.0, 0.5, -1.0, 1.0),
            CubicRegime::Bimodal => (4.0, 2.0, 1.0, 0.1, 1.0, -1.0, 1.0),
        };
        CubicParams { a, b, c, f, mult_a, mult_b, sigma }
    }
}

impl CubicParams {
    pub fn drift(&self, x: f64) -> f64 {
        self.f + self.a * x + self.b * x * x - self.c * x * x * x
    }
}

/// Euler-Maruyama path of the cubic model with two independent noises.
pub fn simulate_cubic(params: &CubicParams, x0: f64, grid: TimeGrid, seed: u64) -> Result<Vec<f64>> {
    let mut r = rng::rng(seed);
    let s = grid.dt.sqrt();
    let mut x = x0;
    let mut out = Vec::with_capacity(grid.steps + 1);
    out.push(x);
    for step in 1..=grid.steps {
        let dw_m = s * r.sample::<f64, _>(StandardNormal);
        let dw_a = s * r.sample::<f64, _>(StandardNormal);
        x += params.drift(x) * grid.dt + (params.mult_a - params.mult_b * x) * dw_m + params.sigma * dw_a;
        check_finite(&[x], step)?;
        out.push(x);
    }
    Ok(out)
}

/// Ensemble mean trajectory of a Lorenz-63 ensemble as `[x, y, z]` rows.
pub fn mean_trajectory(e: &Ensemble) -> Vec<DVector<f64>> {
    let n = e.n_member() as f64;
    (0..e.n_times())
        .map(|t| {
            DVector::from_fn(e.state_dim(), |d, _| {
                (0..e.n_member()).map(|m| e.get(m, t, d)).sum::<f64>() / n
            })
        })
        .collect()
}
