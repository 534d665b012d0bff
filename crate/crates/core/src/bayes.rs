//! Gaussian Bayesian updates for linear observations `v = G u + ε`,
//! `ε ~ N(0, Ro)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::info::{relative_entropy_gaussian, KlDecomposition};
use crate::prob::GaussianDist;

const SYMMETRY_TOL: f64 = 1e-12;

/// Observation operator `G` (L×m) and noise covariance `Ro` (L×L).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearObsModel {
    g: DMatrix<f64>,
    ro: DMatrix<f64>,
}

impl LinearObsModel {
    pub fn new(g: DMatrix<f64>, ro: DMatrix<f64>) -> Result<Self> {
        let l = g.nrows();
        if l == 0 || ro.nrows() != l || ro.ncols() != l {
            return Err(Error::DimensionMismatch(format!(
                "G is {}x{}, Ro is {}x{}",
                g.nrows(),
                g.ncols(),
                ro.nrows(),
                ro.ncols()
            )));
        }
        let scale = ro.amax().max(f64::MIN_POSITIVE);
        let asym = (&ro - ro.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(format!("Ro asymmetry {asym:e}")));
        }
        if ro.clone().cholesky().is_none() {
            return Err(Error::NotPositiveSemiDefinite("Ro must be positive definite".into()));
        }
        Ok(Self { g, ro })
    }

    /// `L` identical unit-weight observations of a scalar with variance `r_o`.
    pub fn repeated(l: usize, r_o: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(l, 1, 1.0), DMatrix::identity(l, l) * r_o)
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn ro(&self) -> &DMatrix<f64> {
        &self.ro
    }

    pub fn n_obs(&self) -> usize {
        self.g.nrows()
    }
}

/// Covariance update form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovUpdate {
    /// `(I − KG) R_f`.
    #[default]
    Standard,
    /// `(I − KG) R_f (I − KG)ᵀ + K Ro Kᵀ`, PSD by construction.
    Joseph,
}

/// Analysis step. Returns the posterior and the gain
/// `K = R_f Gᵀ (G R_f Gᵀ + Ro)⁻¹`.
pub fn gaussian_posterior(
    prior: &GaussianDist,
    obs: &LinearObsModel,
    v: &DVector<f64>,
) -> Result<(GaussianDist, DMatrix<f64>)> {
    gaussian_posterior_with(prior, obs, v, CovUpdate::Standard)
}

pub fn gaussian_posterior_with(
    prior: &GaussianDist,
    obs: &LinearObsModel,
    v: &DVector<f64>,
    form: CovUpdate,
) -> Result<(GaussianDist, DMatrix<f64>)> {
    let m = prior.dim();
    if obs.g.ncols() != m || v.len() != obs.n_obs() {
        return Err(Error::DimensionMismatch(format!(
            "prior dim {m}, G is {}x{}, {} observations",
            obs.g.nrows(),
            obs.g.ncols(),
            v.len()
        )));
    }
    let rf = prior.cov();
    let grf = &obs.g * rf;
    let mut s = &grf * obs.g.transpose() + &obs.ro;
    s = (&s + s.transpose()) * 0.5;
    let ch = s
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("innovation covariance G R_f Gᵀ + Ro".into()))?;
    // Kᵀ = S⁻¹ G R_f
    let k = ch.solve(&grf).transpose();
    let innovation = v - &obs.g * prior.mean();
    let mu = prior.mean() + &k * innovation;
    let ikg = DMatrix::identity(m, m) - &k * &obs.g;
    let ra = match form {
        CovUpdate::Standard => &ikg * rf,
        CovUpdate::Joseph => &ikg * rf * ikg.transpose() + &k * &obs.ro * k.transpose(),
    };
    let ra = (&ra + ra.transpose()) * 0.5;
    Ok((GaussianDist::new(mu, ra)?, k))
}

/// Closed-form posterior for prior `N(μ_f, 1)` and `L` unit-noise direct
/// observations: `μ_a = (μ_f + Σv)/(L+1)`, `R_a = 1/(L+1)`.
pub fn repeated_obs_posterior(mu_f: f64, v: &[f64]) -> (f64, f64) {
    let l = v.len() as f64;
    ((mu_f + v.iter().sum::<f64>()) / (l + 1.0), 1.0 / (l + 1.0))
}

/// Dispersion of `N(·, 1/(L+1))` relative to `N(·, 1)`:
/// `½(−L/(L+1) + ln(L+1))`.
pub fn dispersion_asymptote(l: usize) -> f64 {
    let l = l as f64;
    0.5 * (-l / (l + 1.0) + (l + 1.0).ln())
}

/// Relative entropy of the repeated-observation posterior from its prior.
pub fn repeated_obs_information(mu_f: f64, v: &[f64]) -> Result<KlDecomposition> {
    let (mu_a, r_a) = repeated_obs_posterior(mu_f, v);
    relative_entropy_gaussian(
        &GaussianDist::univariate(mu_a, r_a)?,
        &GaussianDist::univariate(mu_f, 1.0)?,
    )
}

fn inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    a.clone()
        .lu()
        .try_inverse()
        .filter(|inv| inv.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::SingularMatrix(what.into()))
}

/// Max-norm residual between `(A + BCD)⁻¹` and
/// `A⁻¹ − A⁻¹B(C⁻¹ + DA⁻¹B)⁻¹DA⁻¹`; the flag is `residual < tol`.
pub fn woodbury_identity_check(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    tol: f64,
) -> Result<(bool, f64)> {
    let m = a.nrows();
    let l = c.nrows();
    if a.ncols() != m || b.shape() != (m, l) || c.ncols() != l || d.shape() != (l, m) {
        return Err(Error::DimensionMismatch("Woodbury blocks must be m×m, m×L, L×L, L×m".into()));
    }
    let lhs = inverse(&(a + b * c * d), "A + BCD")?;
    let ai = inverse(a, "A")?;
    let ci = inverse(c, "C")?;
    let inner = inverse(&(ci + d * &ai * b), "C⁻¹ + DA⁻¹B")?;
    let rhs = &ai - &ai * b * inner * d * &ai;
    let residual = (lhs - rhs).amax();
    Ok((residual < tol, residual))
}
