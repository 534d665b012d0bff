use std::f64::consts::PI;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::output::{row, Outputs, Table};
use super::Validate;
use crate::calibrate::{calibrate_ou, validate_surrogate, ValidationReport};
use crate::diagnostics::{estimate_a_uncertain, ow_field, sample_a_distribution, sample_posterior_flows, RegressionData};
use crate::dynamics::{
    ensemble_stats, simulate_cubic, simulate_flow, simulate_l63, simulate_l63_ensemble, simulate_linear_ensemble,
    simulate_ode_ensemble, simulate_real_ou, velocity_on_grid, CubicRegime, FlowInit, FlowModelConfig,
    InitialCondition, L63Params, OuParams, SpectralFlowSeries, TimeGrid,
};
use crate::error::{Error, Result};
use crate::info::{relative_entropy_gaussian, relative_entropy_grid, shannon_entropy_gamma, shannon_entropy_gaussian, shannon_entropy_grid};
use crate::lada::{
    posterior_rmse, reconstruct_flow, run_filter_with, simulate_tracers, uncertainty_reduction, ComplexGaussian,
    FilterOptions, FilterTrajectory,
};
use crate::prob::{clip_normalize, estimate_pdf, tabulate, tabulate_range, GammaDist, GaussianDist, GridPdf};
use crate::{rng, Complex64};

fn invalid(msg: String) -> Error {
    Error::Config(msg)
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {x}")))
    }
}

fn finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite, got {x}")))
    }
}

fn at_least(name: &str, n: usize, min: usize) -> Result<()> {
    if n >= min {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be at least {min}, got {n}")))
    }
}

fn to_value<T: Serialize>(p: &T) -> Result<Value> {
    Ok(serde_json::to_value(p)?)
}

/// Horizon divided into whole steps of `dt`.
fn grid(dt: f64, horizon: f64) -> Result<TimeGrid> {
    TimeGrid::with_horizon(dt, horizon).map_err(|e| invalid(e.to_string()))
}

// ---------------------------------------------------------------- entropy

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyGalleryParams {
    /// `(mean, variance)` pairs.
    pub gaussians: Vec<[f64; 2]>,
    /// `(shape, scale)` pairs; each also gets a Gaussian of equal peak height.
    pub gammas: Vec<[f64; 2]>,
    /// Grids span this many standard deviations either side of the mean.
    pub span_sd: f64,
    pub grid_points: usize,
    pub kde_samples: usize,
    /// Variance of the sampled density in the clipping experiment.
    pub kde_sample_var: f64,
    /// Variance of the analytic density it is compared against.
    pub kde_reference_var: f64,
    /// The clipping experiment uses `[-kde_range, kde_range]`.
    pub kde_range: f64,
    pub kde_points: usize,
    pub clip_eps: f64,
}

impl Default for EntropyGalleryParams {
    fn default() -> Self {
        Self {
            gaussians: vec![[0.0, 1.0], [0.0, 2.0], [0.0, 4.0], [3.0, 1.0]],
            gammas: vec![[2.0, 1.0], [4.0, 0.5]],
            span_sd: 12.0,
            grid_points: 4001,
            kde_samples: 10_000,
            kde_sample_var: 0.5,
            kde_reference_var: 1.0,
            kde_range: 10.0,
            kde_points: 2001,
            clip_eps: 1e-5,
        }
    }
}

impl Validate for EntropyGalleryParams {
    fn validate(&self) -> Result<()> {
        for [m, v] in &self.gaussians {
            finite("gaussian mean", *m)?;
            positive("gaussian variance", *v)?;
        }
        for [k, t] in &self.gammas {
            positive("gamma scale", *t)?;
            if !(*k > 1.0 && k.is_finite()) {
                return Err(invalid(format!("gamma shape must exceed 1 for a finite peak, got {k}")));
            }
        }
        positive("span_sd", self.span_sd)?;
        at_least("grid_points", self.grid_points, 3)?;
        at_least("kde_samples", self.kde_samples, 10)?;
        positive("kde_sample_var", self.kde_sample_var)?;
        positive("kde_reference_var", self.kde_reference_var)?;
        positive("kde_range", self.kde_range)?;
        at_least("kde_points", self.kde_points, 3)?;
        positive("clip_eps", self.clip_eps)
    }
}

pub(super) fn entropy_gallery(p: &EntropyGalleryParams, seed: u64, out: &mut Outputs) -> Result<Value> {
    let mut dens = Table::new(&["name", "x", "p"]);
    let mut ent = Table::new(&["name", "family", "mean", "variance", "peak", "entropy_grid", "entropy_closed"]);
    let mut add = |name: String, family: &str, pdf: &GridPdf, mean: f64, var: f64, closed: f64| -> Result<()> {
        for (x, v) in pdf.xs().zip(pdf.values()) {
            dens.push(row![name, x, v]);
        }
        ent.push(row![name, family, mean, var, pdf.max_value(), shannon_entropy_grid(pdf)?, closed]);
        Ok(())
    };
    let gaussian = |m: f64, v: f64| -> Result<(GaussianDist, GridPdf)> {
        let g = GaussianDist::univariate(m, v)?;
        let w = p.span_sd * v.sqrt();
        let pdf = tabulate_range(&g, m - w, m + w, p.grid_points)?;
        Ok((g, pdf))
    };
    for &[m, v] in &p.gaussians {
        let (g, pdf) = gaussian(m, v)?;
        add(format!("gaussian(m={m:?},v={v:?})"), "gaussian", &pdf, m, v, shannon_entropy_gaussian(&g)?)?;
    }
    for &[k, theta] in &p.gammas {
        let g = GammaDist::new(k, theta)?;
        let hi = g.mean() + p.span_sd * g.variance().sqrt();
        let pdf = tabulate_range(&g, 0.0, hi, p.grid_points)?;
        add(format!("gamma(k={k:?},theta={theta:?})"), "gamma", &pdf, g.mean(), g.variance(), shannon_entropy_gamma(&g))?;
        // Gaussian centred at the Gamma mode with the same peak height
        let mode = (k - 1.0) * theta;
        let peak = g.pdf(mode);
        let var = 1.0 / (2.0 * PI * peak * peak);
        let (gm, pdf) = gaussian(mode, var)?;
        add(format!("matched-gaussian(k={k:?},theta={theta:?})"), "gaussian", &pdf, mode, var, shannon_entropy_gaussian(&gm)?)?;
    }
    out.csv("densities.csv", &dens)?;
    out.csv("entropy.csv", &ent)?;

    // KDE of samples compared with an analytic density; the KDE tails are
    // exactly zero far from the data so the raw relative entropy diverges.
    let truth = GaussianDist::univariate(0.0, p.kde_reference_var)?;
    let sampled = GaussianDist::univariate(0.0, p.kde_sample_var)?;
    let xs = sampled.sample_scalar(p.kde_samples, seed)?;
    let r = p.kde_range;
    let dx = 2.0 * r / (p.kde_points - 1) as f64;
    let pt = tabulate(&truth, -r, dx, p.kde_points)?;
    let pk = estimate_pdf(&xs, -r, dx, p.kde_points, None)?;
    let analytic = relative_entropy_gaussian(&truth, &sampled)?.total;
    let raw = match relative_entropy_grid(&pt, &pk) {
        Ok(v) => v,
        Err(Error::Divergence { .. }) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let ptc = clip_normalize(&pt, p.clip_eps)?;
    let pkc = clip_normalize(&pk, p.clip_eps)?;
    let clipped = relative_entropy_grid(&ptc, &pkc)?;
    let mut t = Table::new(&["x", "p_truth", "p_kde", "p_truth_clipped", "p_kde_clipped"]);
    for i in 0..pt.len() {
        t.push(row![pt.x(i), pt.values()[i], pk.values()[i], ptc.values()[i], pkc.values()[i]]);
    }
    out.csv("clipping_pdf.csv", &t)?;
    let zeros = pk.values().iter().filter(|v| **v == 0.0).count();
    let mut t = Table::new(&["quantity", "value"]);
    t.push(row!["kl_analytic", analytic]);
    t.push(row!["kl_unclipped", raw]);
    t.push(row!["kl_clipped", clipped]);
    t.push(row!["kde_zero_cells", zeros as f64]);
    out.csv("clipping.csv", &t)?;
    to_value(p)
}

// ---------------------------------------------------------------- linear

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearEnsembleParams {
    pub a: f64,
    pub f: f64,
    pub x0_mean: f64,
    pub x0_var: f64,
    pub members: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Member trajectories written to `linear_members.csv`.
    pub members_out: usize,
    /// Quadratic model `dx/dt = b x²` for the closure check.
    pub quad_b: f64,
    pub quad_mean: f64,
    pub quad_var: f64,
    pub quad_members: usize,
    /// Finite-difference step for `d⟨x⟩/dt` at `t = 0`.
    pub quad_dt: f64,
}

impl Default for LinearEnsembleParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            f: 0.5,
            x0_mean: 2.0,
            x0_var: 0.09,
            members: 500,
            dt: 0.01,
            horizon: 5.0,
            members_out: 20,
            quad_b: 1.0,
            quad_mean: 1.0,
            quad_var: 0.25,
            quad_members: 10_000,
            quad_dt: 1e-3,
        }
    }
}

impl Validate for LinearEnsembleParams {
    fn validate(&self) -> Result<()> {
        positive("a", self.a)?;
        finite("f", self.f)?;
        finite("x0_mean", self.x0_mean)?;
        positive("x0_var", self.x0_var)?;
        at_least("members", self.members, 2)?;
        positive("dt", self.dt)?;
        positive("horizon", self.horizon)?;
        finite("quad_b", self.quad_b)?;
        finite("quad_mean", self.quad_mean)?;
        positive("quad_var", self.quad_var)?;
        at_least("quad_members", self.quad_members, 2)?;
        positive("quad_dt", self.quad_dt)
    }
}

pub(super) fn linear_ensemble(p: &LinearEnsembleParams, seed: u64, out: &mut Outputs) -> Result<Value> {
    let g = grid(p.dt, p.horizon)?;
    let init = InitialCondition::Gaussian(GaussianDist::univariate(p.x0_mean, p.x0_var)?);
    let ens = simulate_linear_ensemble(p.a, p.f, &init, g, p.members, rng::derive(seed, 1))?;
    let st = ensemble_stats(&ens)?;
    let n = p.members as f64;
    let mut t = Table::new(&["t", "deterministic", "mean", "variance", "variance_theory", "stderr"]);
    for i in 0..ens.n_times() {
        let time = ens.time(i);
        let var = st.variance_at(i, 0);
        t.push(row![
            time,
            crate::dynamics::linear_analytic(p.a, p.f, p.x0_mean, time),
            st.mean_at(i, 0),
            var,
            p.x0_var * (-2.0 * p.a * time).exp(),
            (var / n).sqrt(),
        ]);
    }
    out.csv("linear_stats.csv", &t)?;
    let mut t = Table::new(&["member", "t", "x"]);
    for m in 0..p.members_out.min(p.members) {
        for i in 0..ens.n_times() {
            t.push(row![m, ens.time(i), ens.get(m, i, 0)]);
        }
    }
    out.csv("linear_members.csv", &t)?;

    // One RK4 step of dx/dt = b x² per member.
    let b = p.quad_b;
    let qinit = InitialCondition::Gaussian(GaussianDist::univariate(p.quad_mean, p.quad_var)?);
    let q = simulate_ode_ensemble(
        move |x: &[f64], o: &mut [f64]| o[0] = b * x[0] * x[0],
        &qinit,
        TimeGrid::new(p.quad_dt, 1)?,
        1,
        p.quad_members,
        rng::derive(seed, 2),
    )?;
    let qs = ensemble_stats(&q)?;
    let slopes: Vec<f64> = (0..q.n_member()).map(|m| (q.get(m, 1, 0) - q.get(m, 0, 0)) / p.quad_dt).collect();
    let nq = slopes.len() as f64;
    let fd = slopes.iter().sum::<f64>() / nq;
    let sd = (slopes.iter().map(|s| (s - fd).powi(2)).sum::<f64>() / (nq - 1.0)).sqrt();
    let (m0, v0) = (qs.mean_at(0, 0), qs.variance_at(0, 0));
    let mut t = Table::new(&["quantity", "value"]);
    for (k, v) in [
        ("b", b),
        ("mean0", m0),
        ("var0", v0),
        ("fd_slope", fd),
        ("fd_stderr", sd / nq.sqrt()),
        ("closure_with_variance", b * (m0 * m0 + v0)),
        ("closure_mean_only", b * m0 * m0),
        ("closure_population", b * (p.quad_mean * p.quad_mean + p.quad_var)),
    ] {
        t.push(row![k, v]);
    }
    out.csv("reynolds.csv", &t)?;
    to_value(p)
}

// ---------------------------------------------------------------- Lorenz-63

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct L63EnsembleParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub x0_mean: [f64; 3],
    /// Isotropic initial variance.
    pub x0_var: f64,
    pub members: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Output every `stride`-th step.
    pub stride: usize,
    pub members_out: usize,
}

impl Default for L63EnsembleParams {
    fn default() -> Self {
        let s = L63Params::STANDARD;
        Self {
            sigma: s.sigma,
            rho: s.rho,
            beta: s.beta,
            x0_mean: [20.0, -20.0, 25.0],
            x0_var: 1.0,
            members: 100,
            dt: 0.005,
            horizon: 20.0,
            stride: 2,
            members_out: 20,
        }
    }
}

impl Validate for L63EnsembleParams {
    fn validate(&self) -> Result<()> {
        positive("sigma", self.sigma)?;
        positive("rho", self.rho)?;
        positive("beta", self.beta)?;
        self.x0_mean.iter().try_for_each(|x| finite("x0_mean", *x))?;
        if !(self.x0_var >= 0.0 && self.x0_var.is_finite()) {
            return Err(invalid(format!("x0_var must be non-negative, got {}", self.x0_var)));
        }
        at_least("members", self.members, 2)?;
        positive("dt", self.dt)?;
        positive("horizon", self.horizon)?;
        at_least("stride", self.stride, 1)
    }
}

pub(super) fn l63_ensemble(p: &L63EnsembleParams, seed: u64, out: &mut Outputs) -> Result<Value> {
    let params = L63Params { sigma: p.sigma, rho: p.rho, beta: p.beta };
    let g = grid(p.dt, p.horizon)?;
    let init = GaussianDist::isotropic(DVector::from_column_slice(&p.x0_mean), p.x0_var)?;
    let det = simulate_l63(&params, p.x0_mean, g)?;
    let ens = simulate_l63_ensemble(&params, &init, g, p.stride, p.members, seed)?;
    let st = ensemble_stats(&ens)?;
    let mut t = Table::new(&[
        "t", "det_x", "det_y", "det_z", "mean_x", "mean_y", "mean_z", "sd_x", "sd_y", "sd_z", "departure",
    ]);
    for i in 0..ens.n_times() {
        let d = det[i * p.stride];
        let m: Vec<f64> = (0..3).map(|k| st.mean_at(i, k)).collect();
        let s: Vec<f64> = (0..3).map(|k| st.variance_at(i, k).sqrt()).collect();
        let dep = (0..3).map(|k| (m[k] - d[k]).powi(2)).sum::<f64>().sqrt();
        t.push(row![ens.time(i), d[0], d[1], d[2], m[0], m[1], m[2], s[0], s[1], s[2], dep]);
    }
    out.csv("l63_stats.csv", &t)?;
    let mut t = Table::new(&["member", "t", "x", "y", "z"]);
    for m in 0..p.members_out.min(p.members) {
        for i in 0..ens.n_times() {
            let s = ens.state(m, i);
            t.push(row![m, ens.time(i), s[0], s[1], s[2]]);
        }
    }
    out.csv("l63_members.csv", &t)?;
    to_value(p)
}

// ---------------------------------------------------------------- Bayes

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LGrid {
    /// About `per_decade` distinct values per decade.
    Log,
    /// Every `L` from 1 to `l_max`.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesScanParams {
    /// Prior `N(mu_f, 1)`; every observation has unit noise.
    pub mu_f: f64,
    pub truth: f64,
    pub replicates: usize,
    pub l_max: usize,
    pub l_grid: LGrid,
    pub per_decade: usize,
}

impl Default for BayesScanParams {
    fn default() -> Self {
        Self { mu_f: 1.0, truth: 0.0, replicates: 100, l_max: 10_000, l_grid: LGrid::Log, per_decade: 10 }
    }
}

impl Validate for BayesScanParams {
    fn validate(&self) -> Result<()> {
        finite("mu_f", self.mu_f)?;
        finite("truth", self.truth)?;
        at_least("replicates", self.replicates, 1)?;
        at_least("l_max", self.l_max, 1)?;
        at_least("per_decade", self.per_decade, 1)
    }
}

impl BayesScanParams {
    pub fn l_values(&self) -> Vec<usize> {
        match self.l_grid {
            LGrid::All => (1..=self.l_max).collect(),
            LGrid::Log => {
                let decades = (self.l_max as f64).log10();
                let steps = (decades * self.per_decade as f64).ceil() as usize;
                let mut v: Vec<usize> = (0..=steps)
                    .map(|i| (10f64.powf(i as f64 / self.per_decade as f64).round() as usize).min(self.l_max))
                    .collect();
                v.push(self.l_max);
                v.dedup();
                v
            }
        }
    }
}

pub(super) fn bayes_scan(p: &BayesScanParams, seed: u64, out: &mut Outputs) -> Result<Value> {
    let ls = p.l_values();
    let prior = GaussianDist::univariate(p.mu_f, 1.0)?;
    // Observation sets are nested: replicate r uses the first L draws of its stream.
    let rows: Vec<Vec<(f64, f64, f64, f64)>> = (0..p.replicates)
        .into_par_iter()
        .map(|r| {
            let obs = GaussianDist::univariate(p.truth, 1.0)?.sample_scalar(p.l_max, rng::derive(seed, r as u64))?;
            let mut prefix = Vec::with_capacity(p.l_max + 1);
            prefix.push(0.0);
            for v in &obs {
                prefix.push(prefix.last().unwrap() + v);
            }
            ls.iter()
                .map(|&l| {
                    let lf = l as f64;
                    let (mu_a, r_a) = ((p.mu_f + prefix[l]) / (lf + 1.0), 1.0 / (lf + 1.0));
                    let kl = relative_entropy_gaussian(&GaussianDist::univariate(mu_a, r_a)?, &prior)?;
                    Ok((mu_a, r_a, kl.signal, kl.dispersion))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(&["L", "replicate", "mu_a", "R_a", "signal", "dispersion"]);
    for (j, &l) in ls.iter().enumerate() {
        for (r, rep) in rows.iter().enumerate() {
            let (mu_a, r_a, s, d) = rep[j];
            t.push(row![l, r, mu_a, r_a, s, d]);
        }
    }
    out.csv("bayes_scan.csv", &t)?;
    let mut t = Table::new(&["L", "R_a", "mean_abs_error", "mean_signal", "dispersion", "dispersion_theory"]);
    let n = p.replicates as f64;
    for (j, &l) in ls.iter().enumerate() {
        let err = rows.iter().map(|r| (r[j].0 - p.truth).abs()).sum::<f64>() / n;
        let sig = rows.iter().map(|r| r[j].2).sum::<f64>() / n;
        t.push(row![l, rows[0][j].1, err, sig, rows[0][j].3, crate::bayes::dispersion_asymptote(l)]);
    }
    out.csv("bayes_summary.csv", &t)?;
    to_value(p)
}

// ---------------------------------------------------------------- LaDA

/// Random flow shared by `lada-scan` and `eddy-ow`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    /// Modes `[-kmax, kmax]² \ {0}`.
    pub kmax: i32,
    pub d: f64,
    pub omega: f64,
    pub sigma: f64,
    pub sigma_x: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Filter records kept every `stride` steps.
    pub stride: usize,
    /// Initial filter covariance `r0 · I` around a zero mean.
    pub r0: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self { kmax: 2, d: 0.5, omega: 0.0, sigma: 0.5, sigma_x: 0.1, dt: 1e-3, horizon: 20.0, stride: 10, r0: 1e-4 }
    }
}

impl FlowParams {
    fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.kmax) {
            return Err(invalid(format!("kmax must be in 1..=8, got {}", self.kmax)));
        }
        positive("d", self.d)?;
        finite("omega", self.omega)?;
        positive("sigma", self.sigma)?;
        positive("sigma_x", self.sigma_x)?;
        positive("dt", self.dt)?;
        positive("horizon", self.horizon)?;
        at_least("stride", self.stride, 1)?;
        positive("r0", self.r0)
    }

    fn config(&self) -> Result<FlowModelConfig> {
        let ou = OuParams::new(self.d, self.omega, Complex64::new(0.0, 0.0), self.sigma)?;
        FlowModelConfig::homogeneous(self.kmax, ou, self.sigma_x)
    }
}

struct FlowRun {
    config: FlowModelConfig,
    truth: SpectralFlowSeries,
    filters: Vec<FilterTrajectory>,
}

fn run_flow(fp: &FlowParams, ls: &[usize], seed: u64) -> Result<FlowRun> {
    let config = fp.config()?;
    let g = grid(fp.dt, fp.horizon)?;
    let truth = simulate_flow(&config, g, &FlowInit::Equilibrium, rng::derive(seed, 1))?;
    let l_max = *ls.iter().max().unwrap_or(&1);
    let tracers = simulate_tracers(&truth, l_max, None, rng::derive(seed, 2))?;
    let init = ComplexGaussian::isotropic(DVector::zeros(config.n_modes()), fp.r0)?;
    let opts = FilterOptions { stride: fp.stride };
    let filters = ls
        .par_iter()
        .map(|&l| run_filter_with(&tracers.take(l)?, &config, &init, opts))
        .collect::<Result<_>>()?;
    Ok(FlowRun { config, truth, filters })
}

fn check_l_values(ls: &[usize]) -> Result<()> {
    if ls.is_empty() || ls.contains(&0) {
        return Err(invalid("l_values must be a non-empty list of positive tracer counts".into()));
    }
    Ok(())
}

/// Layout of the gridded fields.
#[derive(Debug, Clone, Serialize)]
struct GridSidecar {
    n: usize,
    x0: f64,
    dx: f64,
    layout: &'static str,
    time: f64,
}

fn grid_sidecar(n: usize, time: f64) -> GridSidecar {
    GridSidecar { n, x0: -PI, dx: 2.0 * PI / n as f64, layout: "row-major, index iy*n+ix, x_j = x0 + j*dx", time }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadaScanParams {
    pub l_values: Vec<usize>,
    /// Flow modes `[-kmax, kmax]² \ {0}`, each an OU process with damping
    /// `d`, phase speed `omega` and noise `sigma`; tracer noise `sigma_x`.
    pub kmax: i32,
    pub d: f64,
    pub omega: f64,
    pub sigma: f64,
    pub sigma_x: f64,
    pub dt: f64,
    pub horizon: f64,
    pub stride: usize,
    pub r0: f64,
    /// Mode whose posterior is traced and scored.
    pub trace_mode: [i32; 2],
    /// Resolution of the reconstructed velocity fields.
    pub grid_n: usize,
}

impl Default for LadaScanParams {
    fn default() -> Self {
        let f = FlowParams::default();
        Self {
            l_values: vec![2, 5, 10, 20, 50],
            kmax: f.kmax,
            d: f.d,
            omega: f.omega,
            sigma: f.sigma,
            sigma_x: f.sigma_x,
            dt: f.dt,
            horizon: f.horizon,
            stride: f.stride,
            r0: f.r0,
            trace_mode: [1, 1],
            grid_n: 32,
        }
    }
}

impl LadaScanParams {
    pub fn flow(&self) -> FlowParams {
        FlowParams {
            kmax: self.kmax,
            d: self.d,
            omega: self.omega,
            sigma: self.sigma,
            sigma_x: self.sigma_x,
            dt: self.dt,
            horizon: self.horizon,
            stride: self.stride,
            r0: self.r0,
        }
    }
}

impl Validate for LadaScanParams {
    fn validate(&self) -> Result<()> {
        check_l_values(&self.l_values)?;
        self.flow().validate()?;
        at_least("grid_n", self.grid_n, 4)
    }
}

pub(super) fn lada_scan(p: &LadaScanParams, seed: u64, out: &mut Outputs) -> Result<Value> {
    let run = run_flow(&p.flow(), &p.l_values, seed)?;
    let mode = run
        .config
        .index_of(p.trace_mode)
        .ok_or_else(|| invalid(format!("trace_mode {:?} is not a mode of the flow", p.trace_mode)))?;
    let mut t = Table::new(&["L", "signal", "dispersion", "signal_truth", "rmse_mode"]);
    for (&l, f) in p.l_values.iter().zip(&run.filters) {
        let u = uncertainty_reduction(f, &run.config, &run.truth)?;
        t.push(row![l, u.signal, u.dispersion, u.signal_truth, posterior_rmse(f, &run.truth, mode)?]);
    }
    out.csv("lada_summary.csv", &t)?;

    let mut t = Table::new(&["L", "t", "truth_re", "truth_im", "mean_re", "mean_im", "std"]);
    for (&l, f) in p.l_values.iter().zip(&run.filters) {
        for i in 0..f.n_records() {
            let u = run.truth.coeff(f.step(i), mode);
            let m = f.mean_slice(i)[mode];
            t.push(row![l, f.time(i), u.re, u.im, m.re, m.im, f.variance(i, mode).max(0.0).sqrt()]);
        }
    }
    out.csv("mode_trace.csv", &t)?;

    let n = p.grid_n;
    let last_step = run.truth.n_steps();
    let (tu, tv) = velocity_on_grid(&run.config, run.truth.coeffs_at(last_step), n)?;
    let mut t = Table::new(&["L", "ix", "iy", "x", "y", "u", "v"]);
    let h = 2.0 * PI / n as f64;
    let push_field = |t: &mut Table, l: usize, u: &[f64], v: &[f64]| {
        for iy in 0..n {
            for ix in 0..n {
                let c = iy * n + ix;
                t.push(row![l, ix, iy, -PI + h * ix as f64, -PI + h * iy as f64, u[c], v[c]]);
            }
        }
    };
    push_field(&mut t, 0, &tu, &tv);
    let mut time = 0.0;
    for (&l, f) in p.l_values.iter().zip(&run.filters) {
        let rec = f.n_records() - 1;
        time = f.time(rec);
        let (u, v) = reconstruct_flow(f, &run.config, rec, n)?;
        push_field(&mut t, l, &u, &v);
    }
    out.csv("flow_fields.csv", &t)?;
    out.json("flow_fields.json", &grid_sidecar(n, time))?;
    to_value(p)
}

// ---------------------------------------------------------------- parameter estimation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamEstimateParams {
    /// Uniform regressor variances for the oscillator table.
    pub r_values: Vec<f64>,
    /// Samples of the orbit `x = sin 2t, y = cos 2t` over whole periods.
    pub n_points: usize,
    pub periods: usize,
    /// Two-point experiment `(ẋᵢ, ⟨yᵢ⟩)` with common variance.
    pub two_point_xdot: [f64; 2],
    pub two_point_y: [f64; 2],
    pub two_point_var: f64,
    pub n_samples: usize,
}

impl Default for ParamEstimateParams {
    fn default() -> Self {
        Self {
            r_values: vec![0.5, 1.0, 2.0],
            n_points: 1000,
            periods: 10,
            two_point_xdot: [1.0, 2.0],
            two_point_y: [1.0, 3.0],
            two_point_var: 10.0,
            n_samples: 10_000,
        }
    }
}

impl Validate for ParamEstimateParams {
    fn validate(&self) -> Result<()> {
        if self.r_values.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(invalid("r_values must be non-negative".into()));
        }
        at_least("n_points", self.n_points, 3)?;
        at_least("periods", self.periods, 1)?;
        self.two_point_xdot.iter().chain(&self.two_point_y).try_for_each(|x| finite("two-point data", *x))?;
        if !(self.two_point_var >= 0.0 && self.two_point_var.is_finite()) {
            return Err(invalid("two_point_var must be non-negative".into()));
        }
        at_least("n_samples", self.n_samples, 100)
    }
}

pub(super) fn param_estimate(p: &ParamEstimateParams, seed: u64, out: &mut Outputs) -> Result<Value> {
    let n = p.n_points;
    let times: Vec<f64> = (0..n).map(|i| p.periods as f64 * PI * i as f64 / n as f64).collect();
    let y: Vec<f64> = times.iter().map(|t| (2.0 * t).cos()).collect();
    let xdot: Vec<f64> = y.iter().map(|y| 2.0 * y).collect();
    let y2 = y.iter().map(|y| y * y).sum::<f64>() / n as f64;
    let base = RegressionData::new(times, xdot, y, vec![0.0; n])?;
    let mut t = Table::new(&["r", "a_estimated", "a_closed_form", "y2_mean"]);
    for &r in &p.r_values {
        let a = estimate_a_uncertain(&base.with_uniform_variance(r)?)?;
        t.push(row![r, a, 2.0 * y2 / (y2 + r), y2]);
    }
    out.csv("estimates.csv", &t)?;

    let data = RegressionData::new(
        vec![0.0, 1.0],
        p.two_point_xdot.to_vec(),
        p.two_point_y.to_vec(),
        vec![p.two_point_var; 2],
    )?;
    let det = estimate_a_uncertain(&data.with_uniform_variance(0.0)?)?;
    let unc = estimate_a_uncertain(&data)?;
    let s = sample_a_distribution(&data, p.n_samples, seed)?;
    let mut t = Table::new(&["sample", "a", "denominator"]);
    for (i, (a, d)) in s.a.iter().zip(&s.denominators).enumerate() {
        t.push(row![i, a, d]);
    }
    out.csv("a_samples.csv", &t)?;
    let den_theory: f64 = p.two_point_y.iter().map(|y| y * y + p.two_point_var).sum();
    let den_mean = s.denominators.iter().sum::<f64>() / s.denominators.len() as f64;
    let mut t = Table::new(&["quantity", "value"]);
    t.push(row!["a_deterministic", det]);
    t.push(row!["a_uncertain", unc]);
    t.push(row!["denominator_mean", den_mean]);
    t.push(row!["denominator_theory", den_theory]);
    if let Some(st) = &s.summary {
        t.push(row!["sample_mean", st.mean]);
        t.push(row!["sample_variance", st.variance]);
        t.push(row!["sample_skewness", st.skewness]);
        t.push(row!["sample_excess_kurtosis", st.excess_kurtosis()]);
    }
    out.csv("two_point.csv", &t)?;
    to_value(p)
}

// ---------------------------------------------------------------- eddies

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EddyOwParams {
    pub l_values: Vec<usize>,
    pub kmax: i32,
    pub d: f64,
    pub omega: f64,
    pub sigma: f64,
    pub sigma_x: f64,
    pub dt: f64,
    pub horizon: f64,
    pub stride: usize,
    pub r0: f64,
    pub n_samples: usize,
    pub grid_n: usize,
    /// A cell is an eddy in a sample when its OW is below this value.
    pub threshold: f64,
}

impl Default for EddyOwParams {
    fn default() -> Self {
        let f = FlowParams::default();
        Self {
            l_values: vec![1, 5],
            kmax: f.kmax,
            d: f.d,
            omega: f.omega,
            sigma: f.sigma,
            sigma_x: f.sigma_x,
            dt: f.dt,
            horizon: f.horizon,
            stride: f.stride,
            r0: f.r0,
            n_samples: 200,
            grid_n: 32,
            threshold: 0.0,
        }
    }
}

impl EddyOwParams {
    pub fn flow(&self) -> FlowParams {
        FlowParams {
            kmax: self.kmax,
            d: self.d,
            omega: self.omega,
            sigma: self.sigma,
            sigma_x: self.sigma_x,
            dt: self.dt,
            horizon: self.horizon,
            stride: self.stride,
            r0: self.r0,
        }
    }
}

impl Validate for EddyOwParams {
    fn validate(&self) -> Result<()> {
        check_l_values(&self.l_values)?;
        self.flow().validate()?;
        at_least("n_samples", self.n_samples, 2)?;
        at_least("grid_n", self.grid_n, 4)?;
        finite("threshold", self.threshold)
    }
}

pub(super) fn eddy_ow(p: &EddyOwParams, seed: u64, out: &mut Outputs) -> Result<Value> {
    let run = run_flow(&p.flow(), &p.l_values, seed)?;
    let n = p.grid_n;
    let h = 2.0 * PI / n as f64;
    let (tu, tv) = velocity_on_grid(&run.config, run.truth.coeffs_at(run.truth.n_steps()), n)?;
    let ow_truth = ow_field(&tu, &tv, n, h)?.ow;
    let mut maps = Table::new(&[
        "L",
        "ix",
        "iy",
        "x",
        "y",
        "ow_truth",
        "ow_mean_flow",
        "mean_ow",
        "ow_of_sample_mean",
        "eddy_probability",
        "cell_variance",
    ]);
    let mut summary = Table::new(&[
        "L",
        "mean_cell_variance",
        "mean_abs_mean_ow",
        "mean_abs_ow_of_sample_mean",
        "mean_abs_ow_mean_flow",
        "max_residual",
    ]);
    let mut time = 0.0;
    for (&l, f) in p.l_values.iter().zip(&run.filters) {
        let rec = f.n_records() - 1;
        time = f.time(rec);
        let (mu, mv) = reconstruct_flow(f, &run.config, rec, n)?;
        let ow_mean_flow = ow_field(&mu, &mv, n, h)?.ow;
        let samples =
            sample_posterior_flows(f, &run.config, rec, p.n_samples, n, rng::derive(seed, 100 + l as u64))?;
        let e = samples.expected_ow()?;
        let prob = samples.eddy_probability(p.threshold);
        let var = samples.cell_variance();
        for iy in 0..n {
            for ix in 0..n {
                let c = iy * n + ix;
                maps.push(row![
                    l,
                    ix,
                    iy,
                    -PI + h * ix as f64,
                    -PI + h * iy as f64,
                    ow_truth[c],
                    ow_mean_flow[c],
                    e.mean_ow[c],
                    e.ow_of_mean[c],
                    prob[c],
                    var[c],
                ]);
            }
        }
        let cells = (n * n) as f64;
        let avg_abs = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>() / cells;
        summary.push(row![
            l,
            var.iter().sum::<f64>() / cells,
            avg_abs(&e.mean_ow),
            avg_abs(&e.ow_of_mean),
            avg_abs(&ow_mean_flow),
            e.residual,
        ]);
    }
    out.csv("ow_maps.csv", &maps)?;
    out.csv("ow_summary.csv", &summary)?;
    out.json("ow_maps.json", &grid_sidecar(n, time))?;
    to_value(p)
}

// ---------------------------------------------------------------- calibration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateRegimesParams {
    pub regimes: Vec<CubicRegime>,
    pub dt: f64,
    /// Length of the series used for calibration, after the burn-in.
    pub horizon: f64,
    pub burn_in: f64,
    pub x0: f64,
    /// Leading stretch of both series written to `series.csv`.
    pub series_time: f64,
}

impl Default for CalibrateRegimesParams {
    fn default() -> Self {
        Self { regimes: CubicRegime::ALL.to_vec(), dt: 0.005, horizon: 5000.0, burn_in: 50.0, x0: 0.0, series_time: 50.0 }
    }
}

impl Validate for CalibrateRegimesParams {
    fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() {
            return Err(invalid("regimes must not be empty".into()));
        }
        positive("dt", self.dt)?;
        positive("horizon", self.horizon)?;
        if !(self.burn_in >= 0.0 && self.burn_in.is_finite()) {
            return Err(invalid("burn_in must be non-negative".into()));
        }
        finite("x0", self.x0)?;
        if !(self.series_time >= 0.0 && self.series_time <= self.horizon) {
            return Err(invalid("series_time must lie in [0, horizon]".into()));
        }
        Ok(())
    }
}

fn regime_index(r: CubicRegime) -> u64 {
    CubicRegime::ALL.iter().position(|x| *x == r).unwrap_or(0) as u64
}

pub(super) fn calibrate_regimes(p: &CalibrateRegimesParams, seed: u64, out: &mut Outputs) -> Result<Value> {
    let burn = (p.burn_in / p.dt).round() as usize;
    let steps = (p.horizon / p.dt).round() as usize;
    let results: Vec<(Vec<f64>, ValidationReport)> = p
        .regimes
        .par_iter()
        .map(|&reg| {
            let idx = regime_index(reg);
            let full = simulate_cubic(&reg.params(), p.x0, TimeGrid::new(p.dt, burn + steps)?, rng::derive(seed, 10 + idx))?;
            let x = full[burn..].to_vec();
            let c = calibrate_ou(&x, p.dt)?;
            let rep = validate_surrogate(&x, &c, p.dt, rng::derive(seed, 20 + idx))?;
            Ok((x, rep))
        })
        .collect::<Result<_>>()?;

    let mut t = Table::new(&[
        "regime",
        "a",
        "f",
        "sigma",
        "mu",
        "R",
        "tau",
        "tau_truncated",
        "mean_err",
        "var_err",
        "acf_linf",
        "kl",
        "truth_skewness",
        "truth_kurtosis",
        "surrogate_skewness",
        "surrogate_kurtosis",
        "truth_modes",
        "surrogate_modes",
    ]);
    for (reg, (_, r)) in p.regimes.iter().zip(&results) {
        let c = &r.params;
        t.push(row![
            reg.name(),
            c.a,
            c.f,
            c.sigma,
            c.mu,
            c.r,
            c.tau,
            c.truncated,
            r.mean_err,
            r.var_err,
            r.acf_linf,
            r.kl,
            r.truth_stats.skewness,
            r.truth_stats.kurtosis,
            r.surrogate_stats.skewness,
            r.surrogate_stats.kurtosis,
            r.truth_modes,
            r.surrogate_modes,
        ]);
    }
    out.csv("regimes.csv", &t)?;

    let mut acf = Table::new(&["regime", "lag", "acf_truth", "acf_surrogate"]);
    let mut pdf = Table::new(&["regime", "x", "p_truth", "p_surrogate"]);
    let mut series = Table::new(&["regime", "t", "truth", "surrogate"]);
    let ns = (p.series_time / p.dt).round() as usize;
    for (&reg, (x, r)) in p.regimes.iter().zip(&results) {
        for (i, (a, b)) in r.truth_acf.iter().zip(&r.surrogate_acf).enumerate() {
            acf.push(row![reg.name(), i as f64 * p.dt, a, b]);
        }
        for (i, (a, b)) in r.truth_pdf.values().iter().zip(r.surrogate_pdf.values()).enumerate() {
            pdf.push(row![reg.name(), r.truth_pdf.x(i), a, b]);
        }
        // same seed as the validation run, so this is a prefix of that path
        let c = &r.params;
        let s = simulate_real_ou(c.a, c.f, c.sigma, c.mu, TimeGrid::new(p.dt, ns.max(1))?, rng::derive(seed, 20 + regime_index(reg)))?;
        for i in 0..=ns.min(x.len() - 1) {
            series.push(row![reg.name(), i as f64 * p.dt, x[i], s[i]]);
        }
        out.json(&format!("report_{}.json", reg.name()), r)?;
    }
    out.csv("acf.csv", &acf)?;
    out.csv("pdf.csv", &pdf)?;
    out.csv("series.csv", &series)?;
    to_value(p)
}
