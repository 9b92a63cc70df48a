//! Helpers shared by the integration tests.

use std::f64::consts::PI;

use manifold_stats::quadrature::integrate_with_breaks;
use manifold_stats::{
    build_distribution, exact_moments, ConcentrationTensor, Manifold, QuadratureSpec,
    RadialProfile, Sampler, DEFAULT_FOLD_TOL,
};

/// Asymptotic Kolmogorov-Smirnov critical value at significance 0.001.
pub fn ks_critical(count: usize) -> f64 {
    1.9495 / (count as f64).sqrt()
}

/// KS statistic of geodesic distances against the oracle distance CDF.
pub fn ks_statistic(m: &Manifold, sigma: f64, count: usize, seed: u64) -> Result<f64, String> {
    let profile = RadialProfile::normal(2).unwrap();
    let lambda = 1.0 / (sigma * sigma);
    let spec = QuadratureSpec::default().with_rel_tol(1e-12);
    let exact = exact_moments(m, &profile, lambda, &spec).map_err(|e| e.to_string())?;
    let radius = exact.truncation_radius;
    let w = |r: f64| {
        if r <= 0.0 || r > radius {
            return 0.0;
        }
        2.0 * PI * profile.eval(lambda * r * r) * m.volume_density(r) * r
    };
    // Density of the distance: every tangent shell that folds onto it.
    let g = |d: f64| {
        if m.curvature() <= 0 {
            return w(d);
        }
        let mut total = w(d);
        let mut k = 1.0;
        while 2.0 * PI * k - d <= radius {
            total += w(2.0 * PI * k - d) + w(2.0 * PI * k + d);
            k += 1.0;
        }
        total
    };
    let q = m.origin();
    let dist = build_distribution(
        m,
        &q,
        ConcentrationTensor::from_sigma(2, sigma).unwrap(),
        profile.clone(),
        DEFAULT_FOLD_TOL,
    )
    .map_err(|e| e.to_string())?;
    let batch = Sampler::new(&dist)
        .map_err(|e| e.to_string())?
        .sample(seed, count);
    let mut d: Vec<f64> = batch.points.iter().map(|p| m.distance(&q, p)).collect();
    d.sort_by(f64::total_cmp);
    let mut cdf = 0.0;
    let mut prev = 0.0;
    let mut ks: f64 = 0.0;
    let n = count as f64;
    for (i, &x) in d.iter().enumerate() {
        if x > prev {
            cdf += integrate_with_breaks(g, &[prev, x], &spec)
                .map_err(|e| e.to_string())?
                .value
                / exact.k_inv;
            prev = x;
        }
        ks = ks
            .max((cdf - i as f64 / n).abs())
            .max(((i + 1) as f64 / n - cdf).abs());
    }
    Ok(ks)
}
