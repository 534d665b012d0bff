//! Shannon entropy and relative entropy (Kullback-Leibler divergence).
//!
//! Numerical versions act on [`GridPdf`]s; closed forms cover Gaussians
//! (with the signal/dispersion split of the relative entropy) and the Gamma
//! family. Natural logarithms throughout.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::prob::{trapz, GammaDist, GaussianDist, GridPdf};

/// Normalization slack tolerated by the grid measures.
const NORMALIZATION_TOL: f64 = 1e-3;

/// Relative entropy of two Gaussians split into its mean and covariance parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlDecomposition {
    pub total: f64,
    pub signal: f64,
    pub dispersion: f64,
}

impl KlDecomposition {
    pub const ZERO: KlDecomposition = KlDecomposition { total: 0.0, signal: 0.0, dispersion: 0.0 };

    fn new(signal: f64, dispersion: f64) -> Self {
        Self { total: signal + dispersion, signal, dispersion }
    }
}

fn check_normalized(p: &GridPdf) -> Result<()> {
    let z = p.integral();
    if (z - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Normalization(z));
    }
    Ok(())
}

fn xlnx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// `-∫ p ln p` by the trapezoidal rule, with `0 ln 0 = 0`.
pub fn shannon_entropy_grid(p: &GridPdf) -> Result<f64> {
    check_normalized(p)?;
    let integrand: Vec<f64> = p.values().iter().map(|&v| xlnx(v)).collect();
    Ok(-trapz(&integrand, p.dx()))
}

/// `(m/2)(1 + ln 2π) + ½ ln det R`. Independent of the mean.
pub fn shannon_entropy_gaussian(dist: &GaussianDist) -> Result<f64> {
    let m = dist.dim() as f64;
    let ln_det = ln_det_spd(dist.cov())?;
    Ok(0.5 * m * (1.0 + (2.0 * std::f64::consts::PI).ln()) + 0.5 * ln_det)
}

/// `k + ln θ + ln Γ(k) + (1 − k) ψ(k)`.
pub fn shannon_entropy_gamma(dist: &GammaDist) -> f64 {
    let k = dist.shape();
    k + dist.scale().ln() + ln_gamma(k) + (1.0 - k) * digamma(k)
}

/// Entropy of a discrete distribution, `-Σ p ln p`.
pub fn shannon_entropy_discrete(p: &[f64]) -> f64 {
    -p.iter().map(|&v| xlnx(v)).sum::<f64>()
}

/// `∫ p ln(p / pm)` on a shared grid.
///
/// `pm` must be positive wherever `p` is; otherwise the divergence is
/// infinite and an error points at the clipping remedy.
pub fn relative_entropy_grid(p: &GridPdf, pm: &GridPdf) -> Result<f64> {
    if !p.same_grid(pm) {
        return Err(Error::GridMismatch(format!(
            "p on (x0 = {}, dx = {}, n = {}), pm on (x0 = {}, dx = {}, n = {})",
            p.x0(),
            p.dx(),
            p.len(),
            pm.x0(),
            pm.dx(),
            pm.len()
        )));
    }
    check_normalized(p)?;
    check_normalized(pm)?;
    let mut integrand = Vec::with_capacity(p.len());
    for (i, (&a, &b)) in p.values().iter().zip(pm.values()).enumerate() {
        integrand.push(if a == 0.0 {
            0.0
        } else if b == 0.0 {
            return Err(Error::Divergence { x: p.x(i), p: a });
        } else {
            a * (a / b).ln()
        });
    }
    Ok(trapz(&integrand, p.dx()))
}

/// `Σ p ln(p / pm)` for probability mass functions.
pub fn relative_entropy_discrete(p: &[f64], pm: &[f64]) -> Result<f64> {
    if p.len() != pm.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} bins", p.len(), pm.len())));
    }
    let mut total = 0.0;
    for (i, (&a, &b)) in p.iter().zip(pm).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::Divergence { x: i as f64, p: a });
            }
            total += a * (a / b).ln();
        }
    }
    Ok(total)
}

/// Closed-form relative entropy of `p` from `pm`:
/// signal `½ (μ−μᴹ)ᵀ (Rᴹ)⁻¹ (μ−μᴹ)`, dispersion
/// `½ [tr(R (Rᴹ)⁻¹) − m − ln det(R (Rᴹ)⁻¹)]`.
pub fn relative_entropy_gaussian(p: &GaussianDist, pm: &GaussianDist) -> Result<KlDecomposition> {
    if p.dim() != pm.dim() {
        return Err(Error::DimensionMismatch(format!(
            "relative entropy between dimensions {} and {}",
            p.dim(),
            pm.dim()
        )));
    }
    gaussian_kl_parts(p.mean(), p.cov(), pm.mean(), pm.cov())
}

pub(crate) fn gaussian_kl_parts(
    mu: &DVector<f64>,
    r: &DMatrix<f64>,
    mu_m: &DVector<f64>,
    r_m: &DMatrix<f64>,
) -> Result<KlDecomposition> {
    let m = mu.len();
    let ch_m = r_m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("reference covariance is not positive definite".into()))?;
    let diff = mu - mu_m;
    let signal = 0.5 * diff.dot(&ch_m.solve(&diff));
    let trace = ch_m.solve(r).trace();
    let ln_det_ratio = ln_det_spd(r)? - 2.0 * ch_m.l().diagonal().map(|d| d.ln()).sum();
    let dispersion = 0.5 * (trace - m as f64 - ln_det_ratio);
    Ok(KlDecomposition::new(signal, dispersion))
}

/// Same decomposition for circular complex Gaussians with Hermitian
/// covariances, evaluated with the real-valued formula (conjugate transpose
/// in place of transpose). Used by the Lagrangian data assimilation
/// diagnostics.
pub fn relative_entropy_complex(
    mu: &DVector<Complex64>,
    r: &DMatrix<Complex64>,
    mu_m: &DVector<Complex64>,
    r_m: &DMatrix<Complex64>,
) -> Result<KlDecomposition> {
    let m = mu.len();
    if r.nrows() != m || mu_m.len() != m || r_m.nrows() != m {
        return Err(Error::DimensionMismatch("complex Gaussian dimensions differ".into()));
    }
    let ch_m = r_m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("reference covariance is not positive definite".into()))?;
    let ch = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("covariance is not positive definite".into()))?;
    let diff = mu - mu_m;
    let signal = 0.5 * diff.dotc(&ch_m.solve(&diff)).re;
    let trace = ch_m.solve(r).trace().re;
    let ln_det = |l: DMatrix<Complex64>| 2.0 * l.diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
    let ln_det_ratio = ln_det(ch.l()) - ln_det(ch_m.l());
    let dispersion = 0.5 * (trace - m as f64 - ln_det_ratio);
    Ok(KlDecomposition::new(signal, dispersion))
}

/// `ln det` of a symmetric positive-definite matrix via Cholesky.
pub fn ln_det_spd<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> Result<f64> {
    let ch = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("covariance is not positive definite".into()))?;
    Ok(2.0 * ch.l().diagonal().iter().map(|d| d.clone().real().ln()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{clip_normalize, tabulate_range};

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    fn normal(mu: f64, var: f64) -> GaussianDist {
        GaussianDist::univariate(mu, var).unwrap()
    }

    #[test]
    fn uniform_entropy_is_log_width() {
        let p = GridPdf::normalized_from(0.0, 0.001, vec![0.5; 2001]).unwrap();
        assert!((shannon_entropy_grid(&p).unwrap() - 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn standard_normal_entropy_on_grid() {
        let p = tabulate_range(&normal(0.0, 1.0), -10.0, 10.0, 4001).unwrap();
        let closed = 0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln());
        assert!((shannon_entropy_grid(&p).unwrap() - 1.41894).abs() < 1e-5);
        assert!((shannon_entropy_gaussian(&normal(0.0, 1.0)).unwrap() - closed).abs() < 1e-14);
        assert!((closed - 1.41894).abs() < 1e-5);
    }

    #[test]
    fn exponential_entropy_on_grid() {
        let g = GammaDist::new(1.0, 1.0).unwrap();
        let p = tabulate_range(&g, 0.0, 40.0, 40_001).unwrap();
        assert!((shannon_entropy_grid(&p).unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let p = GridPdf::new(0.0, 0.1, vec![2.0; 11]).unwrap();
        assert!(matches!(shannon_entropy_grid(&p), Err(Error::Normalization(_))));
    }

    #[test]
    fn gaussian_entropy_is_mean_free_and_additive() {
        let a = shannon_entropy_gaussian(&normal(-3.0, 2.0)).unwrap();
        let b = shannon_entropy_gaussian(&normal(5.0, 2.0)).unwrap();
        assert_eq!(a, b);
        let two = GaussianDist::isotropic(DVector::zeros(2), 1.0).unwrap();
        let h2 = shannon_entropy_gaussian(&two).unwrap();
        assert!((h2 - 2.0 * shannon_entropy_gaussian(&normal(0.0, 1.0)).unwrap()).abs() < 1e-14);
        assert!((h2 - 2.83788).abs() < 1e-5);
        let singular = GaussianDist::new(DVector::zeros(2), DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(shannon_entropy_gaussian(&singular), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn gamma_entropy_closed_form() {
        let e = |k, t| shannon_entropy_gamma(&GammaDist::new(k, t).unwrap());
        assert!((e(1.0, 1.0) - 1.0).abs() < 1e-14);
        assert!((e(2.0, 1.0) - (1.0 + EULER_GAMMA)).abs() < 1e-12);
        for &(k, t) in &[(0.3, 2.5), (4.0, 0.2), (17.0, 9.0)] {
            assert!((e(k, t) - e(k, 1.0) - f64::ln(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn special_functions_are_accurate() {
        // ψ(1) = −γ, ψ(1/2) = −γ − 2 ln 2, ln Γ(1/2) = ln √π, ln Γ(10) = ln 9!
        assert!((digamma(1.0) + EULER_GAMMA).abs() < 1e-12);
        assert!((digamma(0.5) + EULER_GAMMA + 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() / 362_880f64.ln() < 1e-12);
        // recurrence ψ(x+1) = ψ(x) + 1/x up to k = 10^4
        for &x in &[0.01, 0.7, 3.3, 120.0, 9_999.0] {
            let lhs = digamma(x + 1.0);
            let rhs = digamma(x) + 1.0 / x;
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "x = {x}");
        }
    }

    #[test]
    fn identical_densities_have_zero_divergence() {
        let p = tabulate_range(&normal(0.3, 0.7), -8.0, 8.0, 1601).unwrap();
        assert!(relative_entropy_grid(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn soccer_odds_example() {
        let p = [0.1, 0.1, 0.8];
        let pm = [0.8, 0.1, 0.1];
        let kl = relative_entropy_discrete(&p, &pm).unwrap();
        assert!((kl - 0.7 * 8f64.ln()).abs() < 1e-12);
        assert!((kl - 1.455_609).abs() < 1e-6);
        assert!((shannon_entropy_discrete(&pm) - shannon_entropy_discrete(&p)).abs() < 1e-15);
    }

    #[test]
    fn grid_kl_of_shifted_normals() {
        let p = tabulate_range(&normal(0.0, 1.0), -12.0, 13.0, 5001).unwrap();
        let q = tabulate_range(&normal(1.0, 1.0), -12.0, 13.0, 5001).unwrap();
        assert!((relative_entropy_grid(&p, &q).unwrap() - 0.5).abs() < 1e-4);
    }

    #[test]
    fn grid_errors() {
        let p = tabulate_range(&normal(0.0, 1.0), -5.0, 5.0, 101).unwrap();
        let q = tabulate_range(&normal(0.0, 1.0), -5.0, 5.0, 201).unwrap();
        assert!(matches!(relative_entropy_grid(&p, &q), Err(Error::GridMismatch(_))));
        let narrow = tabulate_range(&normal(0.0, 0.001), -5.0, 5.0, 101).unwrap();
        assert!(matches!(relative_entropy_grid(&p, &narrow), Err(Error::Divergence { .. })));
        let fixed = clip_normalize(&narrow, 1e-5).unwrap();
        assert!(relative_entropy_grid(&p, &fixed).unwrap().is_finite());
    }

    #[test]
    fn gaussian_decomposition_examples() {
        let kl = relative_entropy_gaussian(&normal(0.0, 1.0), &normal(0.0, 1.0)).unwrap();
        assert_eq!(kl, KlDecomposition::ZERO);
        let kl = relative_entropy_gaussian(&normal(0.0, 1.0), &normal(1.0, 1.0)).unwrap();
        assert!((kl.signal - 0.5).abs() < 1e-15 && kl.dispersion.abs() < 1e-15);
        let kl = relative_entropy_gaussian(&normal(0.0, 2.0), &normal(0.0, 1.0)).unwrap();
        assert!((kl.dispersion - 0.5 * (1.0 - 2f64.ln())).abs() < 1e-14);
        assert!((kl.dispersion - 0.15343).abs() < 1e-5);
        let p = tabulate_range(&normal(0.0, 2.0), -17.0, 17.0, 6801).unwrap();
        let q = tabulate_range(&normal(0.0, 1.0), -17.0, 17.0, 6801).unwrap();
        assert!((relative_entropy_grid(&p, &q).unwrap() - kl.total).abs() < 1e-6);
    }

    #[test]
    fn gaussian_kl_errors() {
        let two = GaussianDist::isotropic(DVector::zeros(2), 1.0).unwrap();
        assert!(matches!(
            relative_entropy_gaussian(&normal(0.0, 1.0), &two),
            Err(Error::DimensionMismatch(_))
        ));
        let singular = GaussianDist::new(DVector::zeros(2), DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(
            relative_entropy_gaussian(&two, &singular),
            Err(Error::SingularMatrix(_))
        ));
    }

    #[test]
    fn complex_kl_matches_real_for_real_inputs() {
        let mu = DVector::from_vec(vec![Complex64::new(0.3, 0.0), Complex64::new(-1.0, 0.0)]);
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]).map(|v| Complex64::new(v, 0.0));
        let mu_m = DVector::zeros(2);
        let r_m = DMatrix::identity(2, 2);
        let c = relative_entropy_complex(&mu, &r, &mu_m, &r_m).unwrap();
        let real = gaussian_kl_parts(
            &mu.map(|z| z.re),
            &r.map(|z| z.re),
            &DVector::zeros(2),
            &DMatrix::identity(2, 2),
        )
        .unwrap();
        assert!((c.signal - real.signal).abs() < 1e-14);
        assert!((c.dispersion - real.dispersion).abs() < 1e-14);
    }
}
