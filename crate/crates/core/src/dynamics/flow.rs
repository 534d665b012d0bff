//! Random incompressible flow on the periodic square `(-π, π]²`,
//! `u(x, t) = Σ_k û_k(t) e^{ik·x} r_k`, with each Fourier coefficient a
//! complex OU process.
//!
//! A real field requires `û_{-k} = conj(û_k)` and `r_{-k} = conj(r_k)`.
//! Only one mode of every conjugate pair (the *canonical* one, `k₁ > 0` or
//! `k₁ = 0, k₂ > 0`) is simulated; its partner is mirrored exactly.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{complex_increment, ou_step, OuParams, TimeGrid};
use crate::error::{Error, Result};
use crate::rng;

/// Tolerance on the imaginary residue of an evaluated velocity.
pub const REALITY_TOL: f64 = 1e-8;

const CONFIG_TOL: f64 = 1e-12;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

fn is_canonical(k: [i32; 2]) -> bool {
    k[0] > 0 || (k[0] == 0 && k[1] > 0)
}

/// Unit divergence-free eigenvector `(-k₂, k₁)/|k|` of the canonical
/// representative; shared by both members of a conjugate pair.
pub fn default_eigvec(k: [i32; 2]) -> [Complex64; 2] {
    let c = if is_canonical(k) { k } else { [-k[0], -k[1]] };
    let norm = ((c[0] * c[0] + c[1] * c[1]) as f64).sqrt();
    [
        Complex64::new(-c[1] as f64 / norm, 0.0),
        Complex64::new(c[0] as f64 / norm, 0.0),
    ]
}

/// Wavenumbers, per-mode OU parameters, eigenvectors and tracer noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowModelConfig {
    modes: Vec<[i32; 2]>,
    params: Vec<OuParams>,
    eigvecs: Vec<[Complex64; 2]>,
    sigma_x: f64,
    #[serde(skip)]
    mirror: Vec<usize>,
}

impl FlowModelConfig {
    pub fn new(
        modes: Vec<[i32; 2]>,
        params: Vec<OuParams>,
        eigvecs: Vec<[Complex64; 2]>,
        sigma_x: f64,
    ) -> Result<Self> {
        let n = modes.len();
        if n == 0 || params.len() != n || eigvecs.len() != n {
            return Err(Error::FlowConfig(format!(
                "{} modes, {} parameter sets, {} eigenvectors",
                n,
                params.len(),
                eigvecs.len()
            )));
        }
        if !(sigma_x >= 0.0 && sigma_x.is_finite()) {
            return Err(Error::FlowConfig(format!("tracer noise must be nonnegative, got {sigma_x}")));
        }
        let mut mirror = Vec::with_capacity(n);
        for (i, &k) in modes.iter().enumerate() {
            if k == [0, 0] {
                return Err(Error::FlowConfig("the (0, 0) mode is excluded".into()));
            }
            if modes[..i].contains(&k) {
                return Err(Error::FlowConfig(format!("duplicate mode {k:?}")));
            }
            let j = modes
                .iter()
                .position(|&m| m == [-k[0], -k[1]])
                .ok_or_else(|| Error::FlowConfig(format!("mode {k:?} has no conjugate partner")))?;
            params[i].validate()?;
            let (p, q) = (params[i], params[j].conj());
            if (p.d - q.d).abs() > CONFIG_TOL
                || (p.omega - q.omega).abs() > CONFIG_TOL
                || (p.f - q.f).norm() > CONFIG_TOL
                || (p.sigma - q.sigma).abs() > CONFIG_TOL
            {
                return Err(Error::FlowConfig(format!(
                    "parameters of {k:?} are not the conjugates of its partner's"
                )));
            }
            let r = eigvecs[i];
            let kr = r[0] * k[0] as f64 + r[1] * k[1] as f64;
            let norm = (r[0].norm_sqr() + r[1].norm_sqr()).sqrt();
            if kr.norm() > CONFIG_TOL || (norm - 1.0).abs() > CONFIG_TOL {
                return Err(Error::FlowConfig(format!(
                    "eigenvector of {k:?} must satisfy k·r = 0 and |r| = 1"
                )));
            }
            let rc = eigvecs[j];
            if (rc[0] - r[0].conj()).norm() > CONFIG_TOL || (rc[1] - r[1].conj()).norm() > CONFIG_TOL {
                return Err(Error::FlowConfig(format!(
                    "eigenvector of {k:?} is not the conjugate of its partner's"
                )));
            }
            mirror.push(j);
        }
        Ok(Self { modes, params, eigvecs, sigma_x, mirror })
    }

    /// All modes of `[-kmax, kmax]² \ {0}` sharing one set of OU parameters
    /// (`params` is used for canonical modes, its conjugate for partners).
    pub fn homogeneous(kmax: i32, params: OuParams, sigma_x: f64) -> Result<Self> {
        let modes: Vec<[i32; 2]> = (-kmax..=kmax)
            .flat_map(|k1| (-kmax..=kmax).map(move |k2| [k1, k2]))
            .filter(|k| *k != [0, 0])
            .collect();
        Self::from_modes(modes, params, sigma_x)
    }

    /// Given modes (closed under negation) with shared parameters and the
    /// default eigenvectors.
    pub fn from_modes(modes: Vec<[i32; 2]>, params: OuParams, sigma_x: f64) -> Result<Self> {
        let p = modes
            .iter()
            .map(|&k| if is_canonical(k) { params } else { params.conj() })
            .collect();
        let r = modes.iter().map(|&k| default_eigvec(k)).collect();
        Self::new(modes, p, r, sigma_x)
    }

    /// 24 modes in `[-2, 2]²`, `d = 0.5`, `ω = 0`, `f = 0`, `σ = 0.5`,
    /// tracer noise `σ_x = 0.1`.
    pub fn reference() -> Self {
        let p = OuParams { d: 0.5, omega: 0.0, f: Complex64::new(0.0, 0.0), sigma: 0.5 };
        Self::homogeneous(2, p, 0.1).expect("reference configuration is valid")
    }

    /// Same modes and eigenvectors with a different tracer noise.
    pub fn with_sigma_x(&self, sigma_x: f64) -> Result<Self> {
        Self::new(self.modes.clone(), self.params.clone(), self.eigvecs.clone(), sigma_x)
    }

    /// Restores the derived index after deserialization.
    pub fn revalidate(self) -> Result<Self> {
        Self::new(self.modes, self.params, self.eigvecs, self.sigma_x)
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[[i32; 2]] {
        &self.modes
    }

    pub fn params(&self) -> &[OuParams] {
        &self.params
    }

    pub fn eigvecs(&self) -> &[[Complex64; 2]] {
        &self.eigvecs
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    pub fn index_of(&self, k: [i32; 2]) -> Option<usize> {
        self.modes.iter().position(|&m| m == k)
    }

    /// Index of the conjugate partner of mode `i`.
    pub fn mirror(&self, i: usize) -> usize {
        self.mirror[i]
    }

    pub fn is_canonical(&self, i: usize) -> bool {
        is_canonical(self.modes[i])
    }

    /// Indices of the canonical modes, in configuration order.
    pub fn canonical_indices(&self) -> Vec<usize> {
        (0..self.n_modes()).filter(|&i| self.is_canonical(i)).collect()
    }

    pub fn equilibrium_mean(&self) -> Vec<Complex64> {
        self.params.iter().map(OuParams::equilibrium_mean).collect()
    }

    pub fn equilibrium_variance(&self) -> Vec<f64> {
        self.params.iter().map(OuParams::equilibrium_variance).collect()
    }

    /// Completes a vector given on canonical modes by mirroring conjugates.
    pub fn mirror_fill(&self, coeffs: &mut [Complex64]) {
        for i in 0..self.n_modes() {
            if !self.is_canonical(i) {
                coeffs[i] = coeffs[self.mirror[i]].conj();
            }
        }
    }
}

/// How the spectral coefficients start.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowInit {
    Zero,
    /// A draw from the equilibrium distribution of each mode.
    Equilibrium,
    Given(Vec<Complex64>),
}

/// Time series of the Fourier coefficients, `(steps+1) × n_modes`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFlowSeries {
    config: FlowModelConfig,
    grid: TimeGrid,
    coeffs: Vec<Complex64>,
}

impl SpectralFlowSeries {
    /// Wraps precomputed coefficients, checking the reality condition.
    pub fn new(config: FlowModelConfig, grid: TimeGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        let n = config.n_modes();
        if coeffs.len() != (grid.steps + 1) * n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coefficients, got {}",
                (grid.steps + 1) * n,
                coeffs.len()
            )));
        }
        let s = Self { config, grid, coeffs };
        let asym = s.max_asymmetry();
        if asym > 1e-10 {
            return Err(Error::Symmetry(asym));
        }
        Ok(s)
    }

    pub fn config(&self) -> &FlowModelConfig {
        &self.config
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_steps(&self) -> usize {
        self.grid.steps
    }

    pub fn coeffs_at(&self, step: usize) -> &[Complex64] {
        let n = self.config.n_modes();
        &self.coeffs[step * n..(step + 1) * n]
    }

    pub fn coeff(&self, step: usize, mode: usize) -> Complex64 {
        self.coeffs[step * self.config.n_modes() + mode]
    }

    /// Largest `|û_{-k} − conj(û_k)|` over all steps and modes.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.config.n_modes();
        (0..=self.grid.steps)
            .flat_map(|t| (0..n).map(move |i| (t, i)))
            .map(|(t, i)| (self.coeff(t, self.config.mirror(i)) - self.coeff(t, i).conj()).norm())
            .fold(0.0, f64::max)
    }
}

/// Simulates every canonical mode as a complex OU process (stream = mode
/// index) and mirrors its partner with the conjugated path, so the reality
/// condition holds exactly at every step.
pub fn simulate_flow(
    config: &FlowModelConfig,
    grid: TimeGrid,
    init: &FlowInit,
    seed: u64,
) -> Result<SpectralFlowSeries> {
    let n = config.n_modes();
    let mut u0 = match init {
        FlowInit::Zero => vec![Complex64::new(0.0, 0.0); n],
        FlowInit::Given(v) => {
            if v.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "initial coefficients have length {}, config has {n} modes",
                    v.len()
                )));
            }
            v.clone()
        }
        FlowInit::Equilibrium => {
            let mut r = rng::stream(seed, u64::MAX);
            config
                .params
                .iter()
                .map(|p| {
                    let s = (0.5 * p.equilibrium_variance()).sqrt();
                    p.equilibrium_mean()
                        + Complex64::new(
                            s * r.sample::<f64, _>(StandardNormal),
                            s * r.sample::<f64, _>(StandardNormal),
                        )
                })
                .collect()
        }
    };
    config.mirror_fill(&mut u0);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); (grid.steps + 1) * n];
    coeffs[..n].copy_from_slice(&u0);
    let sqrt_half_dt = (0.5 * grid.dt).sqrt();
    for i in config.canonical_indices() {
        let p = config.params[i];
        let j = config.mirror[i];
        let mut r = rng::stream(seed, i as u64);
        let mut u = u0[i];
        for t in 1..=grid.steps {
            u = ou_step(&p, u, grid.dt, complex_increment(&mut r, sqrt_half_dt));
            coeffs[t * n + i] = u;
            coeffs[t * n + j] = u.conj();
        }
    }
    Ok(SpectralFlowSeries { config: config.clone(), grid, coeffs })
}

/// `u(x) = Σ_k û_k e^{ik·x} r_k` at each position.
pub fn eval_velocity_coeffs(
    config: &FlowModelConfig,
    coeffs: &[Complex64],
    positions: &[[f64; 2]],
) -> Result<Vec<[f64; 2]>> {
    if coeffs.len() != config.n_modes() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} modes",
            coeffs.len(),
            config.n_modes()
        )));
    }
    let mut out = Vec::with_capacity(positions.len());
    let mut worst = 0.0f64;
    for x in positions {
        let mut u = [Complex64::new(0.0, 0.0); 2];
        for ((k, r), c) in config.modes.iter().zip(&config.eigvecs).zip(coeffs) {
            let phase = Complex64::from_polar(1.0, k[0] as f64 * x[0] + k[1] as f64 * x[1]);
            let a = c * phase;
            u[0] += a * r[0];
            u[1] += a * r[1];
        }
        worst = worst.max(u[0].im.abs()).max(u[1].im.abs());
        out.push([u[0].re, u[1].re]);
    }
    if worst >= REALITY_TOL {
        return Err(Error::Symmetry(worst));
    }
    Ok(out)
}

/// Velocity of a series at one step.
pub fn eval_velocity(series: &SpectralFlowSeries, step: usize, positions: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    if step > series.grid.steps {
        return Err(Error::InvalidParameter(format!(
            "step {step} outside 0..={}",
            series.grid.steps
        )));
    }
    eval_velocity_coeffs(&series.config, series.coeffs_at(step), positions)
}

/// Spatial derivatives `[[u_x, u_y], [v_x, v_y]]`.
pub type VelocityGradient = [[f64; 2]; 2];

/// Exact spatial derivatives of the spectral field, `∂_j u = Σ i k_j û_k e^{ik·x} r_k`.
pub fn eval_velocity_gradient(
    config: &FlowModelConfig,
    coeffs: &[Complex64],
    positions: &[[f64; 2]],
) -> Result<Vec<VelocityGradient>> {
    if coeffs.len() != config.n_modes() {
        return Err(Error::DimensionMismatch("coefficient vector length".into()));
    }
    let i = Complex64::new(0.0, 1.0);
    let mut out = Vec::with_capacity(positions.len());
    for x in positions {
        let mut g = [[Complex64::new(0.0, 0.0); 2]; 2];
        for ((k, r), c) in config.modes.iter().zip(&config.eigvecs).zip(coeffs) {
            let a = c * Complex64::from_polar(1.0, k[0] as f64 * x[0] + k[1] as f64 * x[1]);
            for comp in 0..2 {
                for dir in 0..2 {
                    g[comp][dir] += i * k[dir] as f64 * a * r[comp];
                }
            }
        }
        let worst = g.iter().flatten().fold(0.0f64, |m, z| m.max(z.im.abs()));
        if worst >= REALITY_TOL {
            return Err(Error::Symmetry(worst));
        }
        out.push([[g[0][0].re, g[0][1].re], [g[1][0].re, g[1][1].re]]);
    }
    Ok(out)
}

/// Velocity on the `n × n` grid `x_j = -π + 2πj/n`, returned row-major as
/// `(u, v)` with index `iy * n + ix`.
pub fn velocity_on_grid(config: &FlowModelConfig, coeffs: &[Complex64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if coeffs.len() != config.n_modes() {
        return Err(Error::DimensionMismatch("coefficient vector length".into()));
    }
    let h = 2.0 * PI / n as f64;
    let kmax = config.modes.iter().flat_map(|k| [k[0].abs(), k[1].abs()]).max().unwrap_or(0);
    // separable phases e^{i k x_j} for k in -kmax..=kmax
    let phases: Vec<Vec<Complex64>> = (-kmax..=kmax)
        .map(|k| (0..n).map(|j| Complex64::from_polar(1.0, k as f64 * (-PI + h * j as f64))).collect())
        .collect();
    let ph = |k: i32, j: usize| phases[(k + kmax) as usize][j];
    let mut u = vec![0.0; n * n];
    let mut v = vec![0.0; n * n];
    let mut worst = 0.0f64;
    for iy in 0..n {
        for ix in 0..n {
            let mut acc = [Complex64::new(0.0, 0.0); 2];
            for ((k, r), c) in config.modes.iter().zip(&config.eigvecs).zip(coeffs) {
                let a = c * ph(k[0], ix) * ph(k[1], iy);
                acc[0] += a * r[0];
                acc[1] += a * r[1];
            }
            worst = worst.max(acc[0].im.abs()).max(acc[1].im.abs());
            u[iy * n + ix] = acc[0].re;
            v[iy * n + ix] = acc[1].re;
        }
    }
    if worst >= REALITY_TOL {
        return Err(Error::Symmetry(worst));
    }
    Ok((u, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI + 0.5) - (-PI + 0.5)).abs() < 1e-12);
        assert!((wrap_angle(0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn reference_config_shape() {
        let cfg = FlowModelConfig::reference();
        assert_eq!(cfg.n_modes(), 24);
        assert_eq!(cfg.canonical_indices().len(), 12);
        for i in 0..24 {
            let k = cfg.modes()[i];
            let j = cfg.mirror(i);
            assert_eq!(cfg.modes()[j], [-k[0], -k[1]]);
        }
        assert!(cfg.index_of([0, 0]).is_none());
    }

    #[test]
    fn config_rejects_missing_partner_and_bad_eigvecs() {
        let p = OuParams { d: 0.5, omega: 0.0, f: c(0.0, 0.0), sigma: 0.5 };
        assert!(matches!(
            FlowModelConfig::from_modes(vec![[1, 0]], p, 0.1),
            Err(Error::FlowConfig(_))
        ));
        let r = vec![[c(1.0, 0.0), c(0.0, 0.0)]; 2];
        assert!(matches!(
            FlowModelConfig::new(vec![[1, 0], [-1, 0]], vec![p; 2], r, 0.1),
            Err(Error::FlowConfig(_))
        ));
        let rot = OuParams { omega: 1.0, ..p };
        assert!(matches!(
            FlowModelConfig::new(
                vec![[1, 0], [-1, 0]],
                vec![rot, rot],
                vec![default_eigvec([1, 0]); 2],
                0.1
            ),
            Err(Error::FlowConfig(_))
        ));
        assert!(FlowModelConfig::from_modes(vec![[1, 0], [-1, 0]], rot, 0.1).is_ok());
    }

    #[test]
    fn zero_flow_stays_zero() {
        let p = OuParams { d: 0.5, omega: 0.0, f: c(0.0, 0.0), sigma: 0.0 };
        let cfg = FlowModelConfig::homogeneous(2, p, 0.1).unwrap();
        let s = simulate_flow(&cfg, TimeGrid::new(0.01, 100).unwrap(), &FlowInit::Zero, 1).unwrap();
        assert!(s.coeffs.iter().all(|z| *z == c(0.0, 0.0)));
        let v = eval_velocity(&s, 100, &[[0.3, -1.0]]).unwrap();
        assert_eq!(v[0], [0.0, 0.0]);
    }

    #[test]
    fn conjugate_symmetry_and_real_velocity() {
        let cfg = FlowModelConfig::reference();
        let s = simulate_flow(&cfg, TimeGrid::new(0.01, 500).unwrap(), &FlowInit::Equilibrium, 4).unwrap();
        assert_eq!(s.max_asymmetry(), 0.0);
        let pts: Vec<[f64; 2]> = (0..50).map(|i| [wrap_angle(0.37 * i as f64), wrap_angle(-0.71 * i as f64)]).collect();
        assert!(eval_velocity(&s, 500, &pts).is_ok());
    }

    #[test]
    fn single_pair_gives_cosine() {
        let p = OuParams { d: 0.5, omega: 0.0, f: c(0.0, 0.0), sigma: 0.0 };
        let cfg = FlowModelConfig::from_modes(vec![[1, 0], [-1, 0]], p, 0.1).unwrap();
        assert_eq!(cfg.eigvecs()[0], [c(0.0, 0.0), c(1.0, 0.0)]);
        let coeffs = [c(0.5, 0.0), c(0.5, 0.0)];
        for &x in &[-3.0, -1.0, 0.0, 0.4, 2.9] {
            let v = eval_velocity_coeffs(&cfg, &coeffs, &[[x, 1.7]]).unwrap()[0];
            assert!(v[0].abs() < 1e-15);
            assert!((v[1] - x.cos()).abs() < 1e-14);
        }
        let bad = [c(0.5, 0.0), c(0.0, 0.5)];
        assert!(matches!(eval_velocity_coeffs(&cfg, &bad, &[[0.3, 0.0]]), Err(Error::Symmetry(_))));
    }

    #[test]
    fn grid_evaluation_matches_pointwise() {
        let cfg = FlowModelConfig::reference();
        let s = simulate_flow(&cfg, TimeGrid::new(0.01, 10).unwrap(), &FlowInit::Equilibrium, 2).unwrap();
        let n = 8;
        let (u, v) = velocity_on_grid(&cfg, s.coeffs_at(10), n).unwrap();
        let h = 2.0 * PI / n as f64;
        for iy in 0..n {
            for ix in 0..n {
                let p = [-PI + h * ix as f64, -PI + h * iy as f64];
                let w = eval_velocity(&s, 10, &[p]).unwrap()[0];
                assert!((w[0] - u[iy * n + ix]).abs() < 1e-12);
                assert!((w[1] - v[iy * n + ix]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn analytic_gradient_is_divergence_free() {
        let cfg = FlowModelConfig::reference();
        let s = simulate_flow(&cfg, TimeGrid::new(0.01, 10).unwrap(), &FlowInit::Equilibrium, 8).unwrap();
        let pts: Vec<[f64; 2]> = (0..30).map(|i| [wrap_angle(1.3 * i as f64), wrap_angle(0.2 * i as f64)]).collect();
        for g in eval_velocity_gradient(&cfg, s.coeffs_at(10), &pts).unwrap() {
            assert!((g[0][0] + g[1][1]).abs() < 1e-12);
        }
    }
}
