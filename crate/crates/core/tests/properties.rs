use approx::assert_relative_eq;
use gpsimplify::dynamics::{ic, r_exact, rk4, HopfNormalForm};
use gpsimplify::learning::{rho_loo, rho_loo_naive};
use gpsimplify::regression::rkhs_norm_sq;
use gpsimplify::transforms::{build_cole_hopf_ode, build_first_order, cole_hopf_truth, relative_l2_values, OdeForm};
use gpsimplify::{fit, ConstraintSystem, Interpolant, KernelSpec, Nugget};
use proptest::prelude::*;

fn burgers(n: usize, nu: f64) -> ConstraintSystem {
    let (_, us) = ic::lookup("burgers-paper").unwrap().sample(n, nu).unwrap();
    build_cole_hopf_ode(&us, nu, OdeForm::Appendix).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn interpolant_survives_json(theta in 0.2f64..5.0, n in 5usize..30, u in 0.0f64..1.0) {
        let interp = fit(&burgers(n, 0.5), &KernelSpec::matern52(theta).unwrap()).unwrap();
        let back: Interpolant = serde_json::from_str(&serde_json::to_string(&interp).unwrap()).unwrap();
        for order in 0..=2 {
            prop_assert_eq!(interp.evaluate(u, order).unwrap(), back.evaluate(u, order).unwrap());
        }
    }

    #[test]
    fn boundary_values_held(theta in 0.3f64..5.0, nu in 0.2f64..2.0) {
        let interp = fit(&burgers(20, nu), &KernelSpec::matern52(theta).unwrap()).unwrap();
        prop_assert!((interp.evaluate(0.0, 0).unwrap() - 1.0).abs() < 1e-4);
        prop_assert!(interp.evaluate(1.0, 0).unwrap().abs() < 1e-4);
    }

    #[test]
    fn fast_loo_matches_refits(theta in 0.3f64..10.0, n in 5usize..20) {
        let system = burgers(n, 0.5).with_nugget(Nugget::Fixed(1e-6)).unwrap();
        let k = KernelSpec::matern52(theta).unwrap();
        let fast = rho_loo(&system, &k).unwrap();
        let slow = rho_loo_naive(&system, &k).unwrap();
        prop_assert!((fast - slow).abs() <= 1e-10 * slow.max(1e-3), "{} vs {}", fast, slow);
    }

    #[test]
    fn norm_scales_quadratically(c in -5.0f64..5.0) {
        prop_assume!(c.abs() > 1e-3);
        let system = burgers(15, 0.5).with_nugget(Nugget::Fixed(1e-8)).unwrap();
        let k = KernelSpec::matern52(1.0).unwrap();
        let base = rkhs_norm_sq(&system, &k).unwrap();
        let scaled = system.clone().with_targets(system.targets().iter().map(|y| c * y).collect()).unwrap();
        assert_relative_eq!(rkhs_norm_sq(&scaled, &k).unwrap(), c * c * base, max_relative = 1e-8);
    }

    #[test]
    fn radius_tends_to_sqrt_mu(r0 in 0.01f64..2.0, mu in 0.01f64..1.0) {
        let late = r_exact(r0, mu, 500.0 / mu);
        prop_assert!((late - mu.sqrt()).abs() < 1e-9);
        let (a, b) = (r_exact(r0, mu, 1.0), r_exact(r0, mu, 2.0));
        if r0 < mu.sqrt() { prop_assert!(a <= b); } else { prop_assert!(a >= b); }
    }

    #[test]
    fn relative_error_is_scale_free(c in 0.1f64..10.0, eps in -0.1f64..0.1) {
        let truth: Vec<f64> = (0..50).map(|i| cole_hopf_truth(i as f64 / 49.0, 0.5)).collect();
        let learned: Vec<f64> = truth.iter().map(|t| t * (1.0 + eps)).collect();
        let scaled_t: Vec<f64> = truth.iter().map(|t| c * t).collect();
        let scaled_l: Vec<f64> = learned.iter().map(|t| c * t).collect();
        let e = relative_l2_values(&learned, &truth).unwrap();
        assert_relative_eq!(e, eps.abs(), epsilon = 1e-12);
        assert_relative_eq!(relative_l2_values(&scaled_l, &scaled_t).unwrap(), e, epsilon = 1e-12);
    }
}

#[test]
fn rk4_tracks_polar_solution() {
    let mu = 0.1 / 3.99f64.sqrt();
    let hopf = HopfNormalForm { mu };
    let t = rk4(|_, y: &[f64], out: &mut [f64]| out.copy_from_slice(&hopf.cartesian_rhs(y[0], y[1])), &[0.3, 0.0], 0.0, 100.0, 1e-2)
        .unwrap();
    let (tf, yf) = (*t.times.last().unwrap(), t.last().unwrap());
    assert!((yf[0].hypot(yf[1]) - r_exact(0.3, mu, tf)).abs() < 1e-8);
}

#[test]
fn first_order_fit_is_accurate() {
    let (_, us) = ic::lookup("firstorder-paper").unwrap().sample(100, 0.0).unwrap();
    let interp = fit(&build_first_order(&us).unwrap(), &KernelSpec::matern52(1.0).unwrap()).unwrap();
    let learned = interp.evaluate_many(&us, 0).unwrap();
    let truth: Vec<f64> = us.iter().map(|&u| ((u * u * u - 1.0) / 3.0).exp()).collect();
    assert!(relative_l2_values(&learned, &truth).unwrap() < 1e-2);
}
