use nalgebra::DMatrix;

use manifold_stats::calibration::FITTED_C4_N2;
use manifold_stats::quadrature::{gaussian_moments_quadrature, integrate_radial};
use manifold_stats::{
    approx_constants, build_distribution, constant_curvature_prediction, exact_moments,
    gaussian_moments, ApproxOrder, ConcentrationTensor, Manifold, QuadratureSpec, RadialProfile,
    DEFAULT_FOLD_TOL,
};

fn normal_axis(m: &Manifold, sigma: f64, spec: &QuadratureSpec) -> f64 {
    let profile = RadialProfile::normal(m.dim()).unwrap();
    exact_moments(m, &profile, 1.0 / (sigma * sigma), spec)
        .unwrap()
        .sigma_axis
}

#[test]
fn exact_variance_is_below_sigma_squared_on_the_sphere_and_above_on_hyperbolic_space() {
    let (s2, h2) = (
        Manifold::sphere(2).unwrap(),
        Manifold::hyperbolic(2).unwrap(),
    );
    let spec = QuadratureSpec::default();
    for i in 1..=20 {
        let sigma = 0.05 * i as f64;
        assert!(
            normal_axis(&s2, sigma, &spec) < sigma * sigma,
            "sphere sigma={sigma}"
        );
        assert!(
            normal_axis(&h2, sigma, &spec) > sigma * sigma,
            "hyperbolic sigma={sigma}"
        );
    }
}

#[test]
fn sphere_example_value() {
    // Independent scipy evaluation of the same radial integrals.
    let v = normal_axis(
        &Manifold::sphere(2).unwrap(),
        0.3,
        &QuadratureSpec::default(),
    );
    assert!((v - 0.087_316_269_006_321_56).abs() < 1e-11, "{v}");
    let v = normal_axis(
        &Manifold::sphere(2).unwrap(),
        1.0,
        &QuadratureSpec::default(),
    );
    assert!((v - 0.698_745_275_250_278_6).abs() < 1e-11, "{v}");
}

#[test]
fn doubling_the_truncation_radius_changes_nothing() {
    let profile = RadialProfile::normal(2).unwrap();
    for m in [
        Manifold::sphere(2).unwrap(),
        Manifold::hyperbolic(2).unwrap(),
        Manifold::euclidean(2).unwrap(),
    ] {
        for sigma in [0.1, 0.5, 1.0] {
            let spec = QuadratureSpec::default();
            let auto = exact_moments(&m, &profile, 1.0 / (sigma * sigma), &spec).unwrap();
            let wide = exact_moments(
                &m,
                &profile,
                1.0 / (sigma * sigma),
                &spec.with_truncation(2.0 * auto.truncation_radius),
            )
            .unwrap();
            assert!(
                (auto.k_inv - wide.k_inv).abs() < 1e-12 * auto.k_inv.max(1.0),
                "{:?} {sigma}",
                m.kind()
            );
            assert!(
                (auto.sigma_axis - wide.sigma_axis).abs() < 1e-12,
                "{:?} {sigma}",
                m.kind()
            );
        }
    }
}

#[test]
fn closed_form_moments_match_polar_quadrature() {
    for n in 1..=3 {
        for sigma in [0.5, 1.0, 2.0] {
            let c = gaussian_moments(n, sigma).unwrap();
            let q = gaussian_moments_quadrature(n, sigma).unwrap();
            for (a, b) in [
                (c.vv, q.vv),
                (c.vv_r2, q.vv_r2),
                (c.r2, q.r2),
                (c.vv_r4, q.vv_r4),
                (c.r4, q.r4),
            ] {
                assert!((a - b).abs() <= 1e-8 * b, "n={n} sigma={sigma}: {a} vs {b}");
            }
        }
    }
    // And through the generic radial integrator: int_0^inf r^3 exp(-r^2/2) dr = 2.
    let spec = QuadratureSpec::default();
    let v = integrate_radial(|r| r.powi(3) * (-0.5 * r * r).exp(), &spec).unwrap();
    assert!((v - 2.0).abs() < 1e-10);
}

#[test]
fn second_order_prediction_is_the_approximation_polynomial() {
    for (m, curvature) in [
        (Manifold::sphere(2).unwrap(), 1),
        (Manifold::hyperbolic(2).unwrap(), -1),
    ] {
        let q = m.origin();
        let profile = RadialProfile::normal(2).unwrap();
        for sigma in [0.1, 0.3, 0.7] {
            let tensor = ConcentrationTensor::from_sigma(2, sigma).unwrap();
            let approx = approx_constants(&m, &q, &tensor, &profile).unwrap();
            let pred = constant_curvature_prediction(
                curvature,
                2,
                sigma,
                ApproxOrder::Second,
                FITTED_C4_N2,
            )
            .unwrap();
            assert!((approx.sigma_matrix[(0, 0)] - pred.sigma_axis).abs() < 1e-12);
            assert!((approx.sigma_matrix[(0, 1)]).abs() < 1e-15);
            assert!(
                (approx.k_inv * (2.0 * std::f64::consts::PI) - pred.k_inv).abs()
                    < 1e-12 * pred.k_inv
            );
        }
    }
}

#[test]
fn predictions_carry_the_curvature_sign() {
    for i in 1..=20 {
        let sigma = 0.05 * i as f64;
        for order in [ApproxOrder::Second, ApproxOrder::Fourth] {
            let s = constant_curvature_prediction(1, 2, sigma, order, FITTED_C4_N2)
                .unwrap()
                .sigma_axis;
            let h = constant_curvature_prediction(-1, 2, sigma, order, FITTED_C4_N2)
                .unwrap()
                .sigma_axis;
            assert!(
                s < sigma * sigma && h > sigma * sigma,
                "sigma={sigma} {order:?}"
            );
        }
    }
}

#[test]
fn flat_covariance_is_the_inverse_tensor() {
    let m = Manifold::euclidean(3).unwrap();
    let t = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, -0.2, 0.0, -0.2, 0.5]);
    let tensor = ConcentrationTensor::new(t.clone()).unwrap();
    let r = approx_constants(&m, &m.origin(), &tensor, &RadialProfile::normal(3).unwrap()).unwrap();
    let inv = t.try_inverse().unwrap();
    assert!((r.sigma_matrix - inv).amax() < 1e-12);
    assert_eq!(r.error_order, 0);
}

#[test]
fn folded_densities_integrate_to_one_on_all_three_surfaces() {
    let spec = QuadratureSpec::default().with_rel_tol(1e-12);
    for m in [
        Manifold::euclidean(2).unwrap(),
        Manifold::sphere(2).unwrap(),
        Manifold::hyperbolic(2).unwrap(),
    ] {
        for sigma in [0.1, 0.3, 1.0] {
            let tensor = ConcentrationTensor::from_sigma(2, sigma).unwrap();
            let d = build_distribution(
                &m,
                &m.origin(),
                tensor,
                RadialProfile::normal(2).unwrap(),
                DEFAULT_FOLD_TOL,
            )
            .unwrap();
            let mass = d.total_mass(32, &spec).unwrap();
            assert!(
                (mass - 1.0).abs() < 1e-8,
                "{:?} sigma={sigma}: {mass}",
                m.kind()
            );
        }
    }
}

#[test]
fn anisotropic_sphere_density_integrates_to_one() {
    let m = Manifold::sphere(2).unwrap();
    let tensor =
        ConcentrationTensor::new(DMatrix::from_row_slice(2, 2, &[6.0, 1.0, 1.0, 2.0])).unwrap();
    let d = build_distribution(
        &m,
        &m.origin(),
        tensor,
        RadialProfile::normal(2).unwrap(),
        DEFAULT_FOLD_TOL,
    )
    .unwrap();
    let mass = d
        .total_mass(128, &QuadratureSpec::default().with_rel_tol(1e-12))
        .unwrap();
    assert!((mass - 1.0).abs() < 1e-8, "{mass}");
}
