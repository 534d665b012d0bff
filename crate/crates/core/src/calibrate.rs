//! Linear stochastic surrogate `dx = (−a x + f) dt + σ dW` fitted to a
//! scalar series by matching its equilibrium mean `μ`, variance `R` and
//! decorrelation time `τ`: `a = 1/τ`, `f = μ a`, `σ = √(2 a R)`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::dynamics::{simulate_real_ou, TimeGrid};
use crate::error::{Error, Result};
use crate::info::relative_entropy_grid;
use crate::prob::{clip_normalize, estimate_pdf, silverman_bandwidth, summary_stats, GridPdf, StatSummary, DEFAULT_CLIP_EPS};

/// The ACF is considered decayed once it falls below this level.
pub const DECAY_LEVEL: f64 = 0.05;
/// Largest sample fed to the density estimates of [`validate_surrogate`].
pub const KDE_MAX_SAMPLES: usize = 20_000;
const KDE_POINTS: usize = 1001;

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
}

/// Sample autocorrelation at lags `0..=max_lag`,
/// `ACF(s) = [1/(N−s) Σ (x_t − μ)(x_{t+s} − μ)] / R`, with `ACF(0) = 1`.
/// The time step only labels the lags and does not enter the values.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if max_lag == 0 || n < 10 * max_lag {
        return Err(Error::Size(format!("series of length {n} is too short for {max_lag} lags")));
    }
    let (mean, var) = mean_var(series);
    if !(var > 0.0) {
        return Err(Error::DegenerateSample("series has zero variance".into()));
    }
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series.iter().map(|x| Complex::new(x - mean, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let mut out: Vec<f64> = (0..=max_lag)
        .map(|s| buf[s].re / len as f64 / (n - s) as f64 / var)
        .collect();
    out[0] = 1.0;
    Ok(out)
}

/// Decorrelation time and how the integral was truncated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decorrelation {
    pub tau: f64,
    /// Last lag included in the integral.
    pub cutoff_lag: usize,
    /// True when the ACF never fell below [`DECAY_LEVEL`] in the window.
    pub truncated: bool,
}

/// Trapezoidal `∫ ACF` from lag 0 to the first lag `s_c` where the ACF
/// drops below [`DECAY_LEVEL`], plus an exponential tail: with
/// `c = ACF(s_c) > 0` the integral `I` becomes `I / (1 − c)`, exact for
/// `e^{−s/τ}`. Without such a lag the whole window is integrated and the
/// result is flagged as truncated.
pub fn decorrelation_time(acf_values: &[f64], dt: f64) -> Result<Decorrelation> {
    if acf_values.len() < 2 || !(dt > 0.0) {
        return Err(Error::Size("need at least two lags and dt > 0".into()));
    }
    let hit = acf_values.iter().position(|v| *v < DECAY_LEVEL);
    let cutoff = hit.unwrap_or(acf_values.len() - 1);
    let window = &acf_values[..=cutoff];
    let integral = dt * (window.iter().sum::<f64>() - 0.5 * (window[0] + window[cutoff]));
    let c = window[cutoff];
    let tau = if hit.is_some() && c > 0.0 { integral / (1.0 - c) } else { integral };
    Ok(Decorrelation { tau, cutoff_lag: cutoff, truncated: hit.is_none() })
}

/// Surrogate parameters with the statistics they were derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub a: f64,
    pub f: f64,
    pub sigma: f64,
    pub mu: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub tau: f64,
    pub truncated: bool,
}

impl CalibrationResult {
    pub fn from_statistics(mu: f64, r: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Calibration(format!("decorrelation time must be positive, got {tau}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Calibration(format!("variance must be positive, got {r}")));
        }
        let a = 1.0 / tau;
        Ok(Self { a, f: mu * a, sigma: (2.0 * a * r).sqrt(), mu, r, tau, truncated: false })
    }

    /// `(μ, R, τ)` implied by `(a, f, σ)`.
    pub fn implied_statistics(&self) -> (f64, f64, f64) {
        (self.f / self.a, self.sigma * self.sigma / (2.0 * self.a), 1.0 / self.a)
    }
}

/// Rejects series whose half-series means differ by half a pooled standard
/// deviation or more.
pub fn check_stationary(series: &[f64]) -> Result<()> {
    let half = series.len() / 2;
    if half < 2 {
        return Err(Error::Size("series too short for the stationarity check".into()));
    }
    let (m1, v1) = mean_var(&series[..half]);
    let (m2, v2) = mean_var(&series[half..]);
    if (m1 - m2).abs() >= 0.5 * (0.5 * (v1 + v2)).sqrt() {
        return Err(Error::Stationarity { first: m1, second: m2 });
    }
    Ok(())
}

/// Fits the surrogate, with the ACF window set to a tenth of the series.
pub fn calibrate_ou(series: &[f64], dt: f64) -> Result<CalibrationResult> {
    calibrate_ou_with(series, dt, series.len() / 10)
}

pub fn calibrate_ou_with(series: &[f64], dt: f64, max_lag: usize) -> Result<CalibrationResult> {
    check_stationary(series)?;
    let (mu, r) = mean_var(series);
    if !(r > 0.0) {
        return Err(Error::DegenerateSample("series has zero variance".into()));
    }
    let d = decorrelation_time(&acf(series, max_lag)?, dt)?;
    let mut out = CalibrationResult::from_statistics(mu, r, d.tau)?;
    out.truncated = d.truncated;
    Ok(out)
}

/// Comparison of a series with a simulation of its calibrated surrogate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// `|μ_s − μ_t| / max(|μ_t|, √R_t)`.
    pub mean_err: f64,
    /// `|R_s − R_t| / R_t`.
    pub var_err: f64,
    /// Largest ACF difference over lags in `[0, 3τ]`.
    pub acf_linf: f64,
    /// Relative entropy of the truth density from the surrogate density.
    pub kl: f64,
    pub tau: f64,
    pub params: CalibrationResult,
    pub truth_stats: StatSummary,
    pub surrogate_stats: StatSummary,
    /// Local maxima of the two density estimates.
    pub truth_modes: usize,
    pub surrogate_modes: usize,
    /// ACFs of both series at lags `0..` spanning `[0, 3τ]`.
    #[serde(skip)]
    pub truth_acf: Vec<f64>,
    #[serde(skip)]
    pub surrogate_acf: Vec<f64>,
    #[serde(skip)]
    pub truth_pdf: GridPdf,
    #[serde(skip)]
    pub surrogate_pdf: GridPdf,
}

fn thin(x: &[f64]) -> Vec<f64> {
    let step = x.len().div_ceil(KDE_MAX_SAMPLES).max(1);
    x.iter().step_by(step).copied().collect()
}

/// Number of local maxima of a density that rise above 5% of its peak and
/// are separated by a dip of at least 10% of the smaller peak.
pub fn count_modes(p: &GridPdf) -> usize {
    let v = p.values();
    let floor = 0.05 * p.max_value();
    let mut modes = 0;
    let mut last_peak: Option<f64> = None;
    let mut valley = f64::INFINITY;
    for i in 1..v.len() - 1 {
        valley = valley.min(v[i]);
        if v[i] > floor && v[i] >= v[i - 1] && v[i] > v[i + 1] {
            match last_peak {
                Some(prev) if valley > 0.9 * prev.min(v[i]) => last_peak = Some(prev.max(v[i])),
                _ => {
                    modes += 1;
                    last_peak = Some(v[i]);
                }
            }
            valley = v[i];
        }
    }
    modes
}

/// Simulates the surrogate over the same horizon, started at `μ`, and
/// compares moments, autocorrelations and densities.
pub fn validate_surrogate(truth: &[f64], result: &CalibrationResult, dt: f64, seed: u64) -> Result<ValidationReport> {
    if truth.len() < 20 {
        return Err(Error::Size("truth series too short".into()));
    }
    let grid = TimeGrid::new(dt, truth.len() - 1)?;
    let surrogate = simulate_real_ou(result.a, result.f, result.sigma, result.mu, grid, seed)?;
    let ts = summary_stats(truth)?;
    let ss = summary_stats(&surrogate)?;
    let lags = ((3.0 * result.tau / dt).ceil() as usize).clamp(1, truth.len() / 10);
    let at = acf(truth, lags)?;
    let as_ = acf(&surrogate, lags)?;
    let acf_linf = at.iter().zip(&as_).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let (t_thin, s_thin) = (thin(truth), thin(&surrogate));
    let h = silverman_bandwidth(&t_thin).max(silverman_bandwidth(&s_thin));
    let lo = t_thin.iter().chain(&s_thin).cloned().fold(f64::INFINITY, f64::min) - 5.0 * h;
    let hi = t_thin.iter().chain(&s_thin).cloned().fold(f64::NEG_INFINITY, f64::max) + 5.0 * h;
    let dx = (hi - lo) / (KDE_POINTS - 1) as f64;
    let tp = estimate_pdf(&t_thin, lo, dx, KDE_POINTS, None)?;
    let sp = estimate_pdf(&s_thin, lo, dx, KDE_POINTS, None)?;
    let kl = relative_entropy_grid(&clip_normalize(&tp, DEFAULT_CLIP_EPS)?, &clip_normalize(&sp, DEFAULT_CLIP_EPS)?)?;

    Ok(ValidationReport {
        mean_err: (ss.mean - ts.mean).abs() / ts.mean.abs().max(ts.variance.sqrt()),
        var_err: (ss.variance - ts.variance).abs() / ts.variance,
        acf_linf,
        kl,
        tau: result.tau,
        params: *result,
        truth_stats: ts,
        surrogate_stats: ss,
        truth_modes: count_modes(&tp),
        surrogate_modes: count_modes(&sp),
        truth_acf: at,
        surrogate_acf: as_,
        truth_pdf: tp,
        surrogate_pdf: sp,
    })
}
