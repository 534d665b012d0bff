use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use uqkit::bayes::{gaussian_posterior, repeated_obs_posterior, LinearObsModel};
use uqkit::calibrate::CalibrationResult;
use uqkit::diagnostics::{estimate_a_uncertain, estimate_theta_full, ow_field, RegressionData};
use uqkit::dynamics::{ensemble_stats, simulate_flow, simulate_linear_ensemble, FlowInit, FlowModelConfig, InitialCondition, OuParams, TimeGrid};
use uqkit::info::{relative_entropy_gaussian, relative_entropy_grid, shannon_entropy_gaussian};
use uqkit::prob::{clip_normalize, estimate_pdf, summary_stats, tabulate_range, GaussianDist, GridPdf};
use uqkit::Complex64;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 64, ..ProptestConfig::default() }
}

/// Random SPD matrix `A Aᵀ + δI`.
fn spd(m: usize, entries: &[f64], delta: f64) -> DMatrix<f64> {
    let a = DMatrix::from_iterator(m, m, entries.iter().copied());
    &a * a.transpose() + DMatrix::identity(m, m) * delta
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn normalization_is_idempotent(values in prop::collection::vec(0.0f64..5.0, 3..200), dx in 0.01f64..2.0) {
        prop_assume!(values.iter().any(|v| *v > 1e-3));
        let once = GridPdf::normalized_from(-1.0, dx, values).unwrap();
        let twice = once.clone().normalized().unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn tabulated_gaussian_moments(mean in -50.0f64..50.0, var in 1e-3f64..100.0) {
        let g = GaussianDist::univariate(mean, var).unwrap();
        let w = 10.0 * var.sqrt();
        let p = tabulate_range(&g, mean - w, mean + w, 4001).unwrap();
        prop_assert!((p.mean() - mean).abs() < 1e-6 * (1.0 + var.sqrt()));
        prop_assert!((p.variance() - var).abs() < 1e-6 * var.max(1.0));
    }

    #[test]
    fn kurtosis_bound(samples in prop::collection::vec(-1e3f64..1e3, 4..300)) {
        prop_assume!(samples.iter().any(|x| *x != samples[0]));
        if let Ok(s) = summary_stats(&samples) {
            prop_assert!(s.variance >= 0.0);
            prop_assert!(s.kurtosis >= 1.0 + s.skewness * s.skewness - 1e-9);
        }
    }

    #[test]
    fn clipping_properties(
        values in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], 10..200),
        e1 in 1e-8f64..1e-3,
        e2 in 1e-8f64..1e-3,
    ) {
        prop_assume!(values.iter().any(|v| *v > 0.05));
        let p = GridPdf::normalized_from(0.0, 0.1, values).unwrap();
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        prop_assume!(hi < 0.5 * p.max_value());
        let a = clip_normalize(&p, lo).unwrap();
        let b = clip_normalize(&p, hi).unwrap();
        for c in [&a, &b] {
            prop_assert!(c.min_value() > 0.0);
            prop_assert!((c.integral() - 1.0).abs() < 1e-9);
        }
        prop_assert!(b.min_value() >= a.min_value() * (1.0 - 1e-12));
    }

    #[test]
    fn grid_kl_matches_closed_form(m1 in -1.0f64..1.0, v1 in 0.5f64..2.0, m2 in -1.0f64..1.0, v2 in 0.5f64..2.0) {
        // ±12σ of p; the variance ratio keeps q far above underflow there
        let (p, q) = (GaussianDist::univariate(m1, v1).unwrap(), GaussianDist::univariate(m2, v2).unwrap());
        let w = 12.0 * v1.sqrt();
        let pg = tabulate_range(&p, m1 - w, m1 + w, 20001).unwrap();
        let qg = tabulate_range(&q, m1 - w, m1 + w, 20001).unwrap().normalized().unwrap();
        let kl = relative_entropy_gaussian(&p, &q).unwrap();
        prop_assert!((relative_entropy_grid(&pg, &qg).unwrap() - kl.total).abs() < 1e-4);
        prop_assert!((kl.signal + kl.dispersion - kl.total).abs() < 1e-10);
        prop_assert!(kl.signal >= 0.0 && kl.dispersion >= -1e-12);
    }

    #[test]
    fn grid_kl_is_non_negative_after_clipping(
        a in prop::collection::vec(0.0f64..1.0, 50),
        b in prop::collection::vec(0.0f64..1.0, 50),
    ) {
        prop_assume!(a.iter().any(|v| *v > 0.1) && b.iter().any(|v| *v > 0.1));
        let p = clip_normalize(&GridPdf::normalized_from(0.0, 0.2, a).unwrap(), 1e-5).unwrap();
        let q = clip_normalize(&GridPdf::normalized_from(0.0, 0.2, b).unwrap(), 1e-5).unwrap();
        prop_assert!(relative_entropy_grid(&p, &q).unwrap() >= -1e-10);
    }

    #[test]
    fn grid_kl_is_affine_invariant(
        m in -1.0f64..1.0,
        v in 0.3f64..2.0,
        scale in prop_oneof![-3.0f64..-0.3, 0.3f64..3.0],
        shift in -5.0f64..5.0,
    ) {
        let p = tabulate_range(&GaussianDist::univariate(m, v).unwrap(), -15.0, 15.0, 6001).unwrap();
        let q = tabulate_range(&GaussianDist::univariate(0.0, 1.0).unwrap(), -15.0, 15.0, 6001).unwrap();
        let before = relative_entropy_grid(&p, &q).unwrap();
        let after = relative_entropy_grid(&p.affine(scale, shift).unwrap(), &q.affine(scale, shift).unwrap()).unwrap();
        prop_assert!((before - after).abs() < 1e-4);
    }

    #[test]
    fn posterior_contracts(
        a in prop::collection::vec(-1.0f64..1.0, 9),
        g in prop::collection::vec(-2.0f64..2.0, 6),
        b in prop::collection::vec(-1.0f64..1.0, 4),
        v in prop::collection::vec(-3.0f64..3.0, 2),
        dir in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let prior = GaussianDist::new(DVector::zeros(3), spd(3, &a, 0.1)).unwrap();
        let obs = LinearObsModel::new(DMatrix::from_row_slice(2, 3, &g), spd(2, &b, 0.05)).unwrap();
        let (post, _) = gaussian_posterior(&prior, &obs, &DVector::from_vec(v)).unwrap();
        let x = DVector::from_vec(dir);
        let before = (x.transpose() * prior.cov() * &x)[0];
        let after = (x.transpose() * post.cov() * &x)[0];
        prop_assert!(after <= before + 1e-10);
    }

    #[test]
    fn repeated_posterior_is_convex_combination(mu_f in -5.0f64..5.0, v in prop::collection::vec(-5.0f64..5.0, 1..60)) {
        let l = v.len() as f64;
        let (mu_a, r_a) = repeated_obs_posterior(mu_f, &v);
        let w = 1.0 / (l + 1.0);
        let mean_v = v.iter().sum::<f64>() / l;
        prop_assert!((mu_a - (w * mu_f + (1.0 - w) * mean_v)).abs() < 1e-12);
        prop_assert_eq!(r_a, w);
    }

    #[test]
    fn calibration_relations_invert(mu in -1e3f64..1e3, r in 1e-4f64..1e3, tau in 1e-3f64..1e2) {
        let c = CalibrationResult::from_statistics(mu, r, tau).unwrap();
        prop_assert!((c.a * c.tau - 1.0).abs() < 1e-12);
        let (m2, r2, t2) = c.implied_statistics();
        prop_assert!((m2 - mu).abs() <= 1e-12 * mu.abs().max(1.0));
        prop_assert!((r2 - r).abs() <= 1e-12 * r);
        prop_assert!((t2 - tau).abs() <= 1e-12 * tau);
    }

    #[test]
    fn uncertain_estimate_reduces_to_least_squares(pts in prop::collection::vec((-3.0f64..3.0, 0.1f64..3.0, -3.0f64..3.0, -3.0f64..3.0), 2..30)) {
        let xdot: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let n = pts.len();
        let data = RegressionData::new((0..n).map(|i| i as f64).collect(), xdot.clone(), y.clone(), vec![0.0; n]).unwrap();
        let m: Vec<DMatrix<f64>> = pts.iter().map(|p| DMatrix::from_diagonal(&DVector::from_vec(vec![p.1, p.2]))).collect();
        let z: Vec<DVector<f64>> = pts.iter().map(|p| DVector::from_vec(vec![p.0, p.3])).collect();
        prop_assume!(pts.iter().map(|p| p.2 * p.2).sum::<f64>() > 1e-3);
        let theta = estimate_theta_full(&m, &z).unwrap();
        let a = estimate_a_uncertain(&data).unwrap();
        prop_assert!((a - theta[0]).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn ow_ignores_uniform_velocity(field in prop::collection::vec(-1.0f64..1.0, 128), c in (-5.0f64..5.0, -5.0f64..5.0)) {
        let (u, v) = field.split_at(64);
        let base = ow_field(u, v, 8, 0.3).unwrap();
        let us: Vec<f64> = u.iter().map(|x| x + c.0).collect();
        let vs: Vec<f64> = v.iter().map(|x| x + c.1).collect();
        let shifted = ow_field(&us, &vs, 8, 0.3).unwrap();
        for (a, b) in base.ow.iter().zip(&shifted.ow) {
            prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn reynolds_identity_on_ensembles(seed in any::<u64>(), mean in -3.0f64..3.0, var in 0.01f64..4.0) {
        let init = InitialCondition::Gaussian(GaussianDist::univariate(mean, var).unwrap());
        let e = simulate_linear_ensemble(0.7, 0.3, &init, TimeGrid::new(0.1, 20).unwrap(), 50, seed).unwrap();
        let s = ensemble_stats(&e).unwrap();
        for i in 0..s.mean.len() {
            let lhs = s.second_moment[i];
            let rhs = s.mean[i] * s.mean[i] + s.variance[i];
            prop_assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn flow_keeps_conjugate_symmetry(seed in any::<u64>()) {
        let p = OuParams::new(0.5, 0.3, Complex64::new(0.1, -0.2), 0.5).unwrap();
        let cfg = FlowModelConfig::homogeneous(2, p, 0.1).unwrap();
        let flow = simulate_flow(&cfg, TimeGrid::new(0.01, 200).unwrap(), &FlowInit::Equilibrium, seed).unwrap();
        prop_assert_eq!(flow.max_asymmetry(), 0.0);
    }

    #[test]
    fn kde_is_a_density(seed in any::<u64>(), var in 0.1f64..3.0) {
        let xs = GaussianDist::univariate(0.0, var).unwrap().sample_scalar(500, seed).unwrap();
        let p = estimate_pdf(&xs, -20.0, 0.02, 2001, None).unwrap();
        prop_assert!((p.integral() - 1.0).abs() < 1e-9);
        prop_assert!(p.values().iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn gaussian_entropy_grows_with_variance() {
    let s: Vec<f64> = [0.25, 1.0, 4.0]
        .iter()
        .map(|v| shannon_entropy_gaussian(&GaussianDist::univariate(0.0, *v).unwrap()).unwrap())
        .collect();
    assert!(s[0] < s[1] && s[1] < s[2]);
}
