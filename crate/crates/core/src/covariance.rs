//! Small-concentration approximations of the normalizing constant and covariance.
//!
//! With `T^{-1} = S S'` and `R = S' Ric S`, the volume expansion
//! `dV = [1 - v' Ric v / 6 + O(|v|^3)] dv` gives
//!
//! ```text
//! k^{-1}       = |S| (1 - tr(RC)/6)
//! k^{-1} Sigma = |S| S (C - tr(RD)/6) S'
//! ```
//!
//! where `C` and `D` are the second and fourth moments of the Euclidean
//! kernel. `S^{-1} Sigma S^{-T}` does not depend on the choice of normal
//! coordinates.

use nalgebra::DMatrix;

use crate::distribution::ConcentrationTensor;
use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point};
use crate::profile::RadialProfile;

/// `T^{-1} = S S'` with `S = U Lambda^{1/2}` from the eigendecomposition of `T^{-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SqrtFactor {
    s: DMatrix<f64>,
    u: DMatrix<f64>,
    lambda: Vec<f64>,
}

impl SqrtFactor {
    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Eigenvalues of `T^{-1}`, descending.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// `|det S| = |det T|^{-1/2}`.
    pub fn det_s(&self) -> f64 {
        self.lambda.iter().map(|l| l.sqrt()).product()
    }

    /// Spectral norm `||S||_2 = lambda_min(T)^{-1/2}`.
    pub fn norm(&self) -> f64 {
        self.lambda[0].sqrt()
    }
}

/// Eigenvalues sorted descending and eigenvector signs fixed, so equal tensors
/// give equal factors regardless of the solver's internal ordering.
pub fn factor_concentration(tensor: &ConcentrationTensor) -> Result<SqrtFactor> {
    let n = tensor.dim();
    let eigen = tensor.matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    // Ascending in T is descending in T^{-1}.
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
    let mut u = DMatrix::zeros(n, n);
    let mut lambda = Vec::with_capacity(n);
    for (col, &idx) in order.iter().enumerate() {
        let t_eig = eigen.eigenvalues[idx];
        if !(t_eig > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("eigenvalue {t_eig:e}")));
        }
        let mut v = eigen.eigenvectors.column(idx).clone_owned();
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v = -v;
        }
        u.set_column(col, &v);
        lambda.push(1.0 / t_eig);
    }
    let scale = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        lambda.iter().map(|l| l.sqrt()),
    ));
    let s = &u * scale;
    Ok(SqrtFactor { s, u, lambda })
}

/// Second moment `C` and fourth-moment array `D[k][l][i][j]` of a normalized kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSet {
    pub c: DMatrix<f64>,
    dim: usize,
    d: Vec<f64>,
}

impl MomentSet {
    /// Isotropic moments: `C = m2/n I`, `D = m4/(n(n+2)) (d_kl d_ij + d_ki d_lj + d_kj d_li)`.
    pub fn isotropic(n: usize, second: f64, fourth: f64) -> Self {
        let c = DMatrix::identity(n, n) * (second / n as f64);
        let scale = fourth / (n * (n + 2)) as f64;
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let mut d = vec![0.0; n * n * n * n];
        for k in 0..n {
            for l in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        d[((k * n + l) * n + i) * n + j] = scale
                            * (delta(k, l) * delta(i, j)
                                + delta(k, i) * delta(l, j)
                                + delta(k, j) * delta(l, i));
                    }
                }
            }
        }
        Self { c, dim: n, d }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn d(&self, k: usize, l: usize, i: usize, j: usize) -> f64 {
        let n = self.dim;
        self.d[((k * n + l) * n + i) * n + j]
    }
}

/// Moments of the kernel; closed form for the normal kernel, radial quadrature otherwise.
pub fn profile_moments(profile: &RadialProfile, n: usize) -> Result<MomentSet> {
    if profile.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: profile.dim(),
        });
    }
    if profile.is_normal() {
        // Isserlis: E|w|^2 = n, E|w|^4 = n(n+2).
        return Ok(MomentSet::isotropic(n, n as f64, (n * (n + 2)) as f64));
    }
    let mass = profile.euclidean_radial_moment(0)?;
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized(mass));
    }
    let second = profile.euclidean_radial_moment(2)?;
    let fourth = profile.euclidean_radial_moment(4)?;
    if !profile.support_bounded() {
        let r = profile.euclidean_radius(&Default::default());
        let wider = profile.euclidean_radial_moment_to(4, Some(2.0 * r))?;
        if !fourth.is_finite() || (wider - fourth).abs() > 1e-6 * fourth.abs() {
            return Err(Error::DivergentMoment);
        }
    }
    Ok(MomentSet::isotropic(n, second, fourth))
}

/// `[tr(RD)]_ij = sum_kl r_kl D[k][l][i][j]`.
pub fn contract_tr_rd(r: &DMatrix<f64>, moments: &MomentSet) -> Result<DMatrix<f64>> {
    let n = moments.dim();
    if r.nrows() != n || r.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: r.nrows(),
        });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let mut acc = 0.0;
        for k in 0..n {
            for l in 0..n {
                acc += r[(k, l)] * moments.d(k, l, i, j);
            }
        }
        acc
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ApproxOrder {
    Second,
    Fourth,
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceResult {
    pub sigma_matrix: DMatrix<f64>,
    pub k_inv: f64,
    pub order: ApproxOrder,
    /// Remainder is `O(||S||^error_order)`; zero for exact results.
    pub error_order: u32,
}

struct Expansion {
    factor: SqrtFactor,
    moments: MomentSet,
    tr_rd: DMatrix<f64>,
    denom: f64,
}

fn expand(
    manifold: &Manifold,
    q: &Point,
    tensor: &ConcentrationTensor,
    profile: &RadialProfile,
) -> Result<Expansion> {
    let n = manifold.dim();
    if tensor.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: tensor.dim(),
        });
    }
    let factor = factor_concentration(tensor)?;
    let moments = profile_moments(profile, n)?;
    let ricci = manifold.ricci_in_frame(q)?;
    let r = factor.s().transpose() * ricci * factor.s();
    let tr_rc = (&r * &moments.c).trace();
    let denom = 1.0 - tr_rc / 6.0;
    if !(denom > 0.0) {
        return Err(Error::ApproximationOutOfRange(denom));
    }
    let tr_rd = contract_tr_rd(&r, &moments)?;
    Ok(Expansion {
        factor,
        moments,
        tr_rd,
        denom,
    })
}

/// Second-order normalizing constant and covariance.
pub fn approx_constants(
    manifold: &Manifold,
    q: &Point,
    tensor: &ConcentrationTensor,
    profile: &RadialProfile,
) -> Result<CovarianceResult> {
    let e = expand(manifold, q, tensor, profile)?;
    let inner = &e.moments.c - &e.tr_rd / 6.0;
    let sigma = e.factor.s() * inner * e.factor.s().transpose() / e.denom;
    Ok(CovarianceResult {
        sigma_matrix: symmetrize(sigma),
        k_inv: e.factor.det_s() * e.denom,
        order: ApproxOrder::Second,
        error_order: if manifold.curvature() == 0 { 0 } else { 3 },
    })
}

/// `S^{-1} Sigma S^{-T} = (C - tr(RD)/6) / (1 - tr(RC)/6)`.
pub fn invariant_ratio(
    tensor: &ConcentrationTensor,
    profile: &RadialProfile,
    manifold: &Manifold,
    q: &Point,
) -> Result<DMatrix<f64>> {
    let e = expand(manifold, q, tensor, profile)?;
    Ok((&e.moments.c - &e.tr_rd / 6.0) / e.denom)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalApprox {
    /// Covariance from the full `tr(RD)` contraction, `2R + tr(R) I`.
    pub primary: CovarianceResult,
    /// The shorthand `2R + n diag(R)` variant; equal to `primary` when `R` is scalar.
    pub diag_shorthand: DMatrix<f64>,
}

/// Normal-kernel covariance approximation in both algebraic forms.
pub fn normal_approx_cov(
    manifold: &Manifold,
    q: &Point,
    tensor: &ConcentrationTensor,
) -> Result<NormalApprox> {
    let n = manifold.dim();
    let profile = RadialProfile::normal(n)?;
    let primary = approx_constants(manifold, q, tensor, &profile)?;
    let factor = factor_concentration(tensor)?;
    let s = factor.s();
    let ricci = manifold.ricci_in_frame(q)?;
    let t_inv = s * s.transpose();
    let r = s.transpose() * &ricci * s;
    let denom = 1.0 - (&t_inv * &ricci).trace() / 6.0;
    if !(denom > 0.0) {
        return Err(Error::ApproximationOutOfRange(denom));
    }
    let diag_r = DMatrix::from_diagonal(&r.diagonal());
    let numer =
        &t_inv - &t_inv * &ricci * &t_inv / 3.0 - s * diag_r * s.transpose() * (n as f64 / 6.0);
    Ok(NormalApprox {
        primary,
        diag_shorthand: symmetrize(numer / denom),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub k_inv: f64,
    pub sigma_axis: f64,
}

/// Per-axis variance prediction for the standard normal (`T = sigma^-2 I`) on a
/// space of constant curvature `curvature`.
///
/// Fourth-order terms scale with `curvature^2`, so the flat case returns
/// `sigma^2` exactly at either order. `c4` is the `sigma^4` numerator coefficient.
pub fn constant_curvature_prediction(
    curvature: i32,
    n: usize,
    sigma: f64,
    order: ApproxOrder,
    c4: f64,
) -> Result<Prediction> {
    if !matches!(curvature, -1..=1) {
        return Err(Error::InvalidParameter(format!(
            "curvature must be -1, 0 or 1, got {curvature}"
        )));
    }
    if n < 2 || !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need n >= 2 and sigma > 0, got n={n}, sigma={sigma}"
        )));
    }
    let kappa = curvature as f64;
    let nf = n as f64;
    let s2 = sigma * sigma;
    let fourth = match order {
        ApproxOrder::Second => 0.0,
        ApproxOrder::Fourth => kappa * kappa * s2 * s2,
        ApproxOrder::Exact => {
            return Err(Error::InvalidParameter(
                "predictions are second or fourth order".into(),
            ));
        }
    };
    let denom = 1.0 - kappa * nf / 6.0 * s2 + nf * (nf + 2.0) / 120.0 * fourth;
    if !(denom > 0.0) {
        return Err(Error::ApproximationOutOfRange(denom));
    }
    let numer = 1.0 - kappa * (nf + 2.0) / 6.0 * s2 + c4 * fourth;
    Ok(Prediction {
        k_inv: (2.0 * std::f64::consts::PI).powf(nf / 2.0) * sigma.powf(nf) * denom,
        sigma_axis: s2 * numer / denom,
    })
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn factor_examples() {
        let f = factor_concentration(&ConcentrationTensor::new(DMatrix::identity(2, 2)).unwrap())
            .unwrap();
        assert!((f.s() - DMatrix::identity(2, 2)).amax() < 1e-15);
        let f =
            factor_concentration(&ConcentrationTensor::new(diag(&[4.0, 1.0])).unwrap()).unwrap();
        // Columns ordered by descending T^{-1} eigenvalue.
        let ss = f.s() * f.s().transpose();
        assert!((ss - diag(&[0.25, 1.0])).amax() < 1e-15);
        assert!((f.det_s() - 0.5).abs() < 1e-15);
        assert!((f.norm() - 1.0).abs() < 1e-15);
        assert!(f.s().iter().any(|&x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn normal_moments_match_isserlis_entries() {
        let m = profile_moments(&RadialProfile::normal(2).unwrap(), 2).unwrap();
        assert_eq!(m.c, DMatrix::identity(2, 2));
        assert_eq!(m.d(0, 0, 0, 0), 3.0);
        assert_eq!(m.d(0, 1, 0, 1), 1.0);
        assert_eq!(m.d(0, 1, 1, 0), 1.0);
        assert_eq!(m.d(0, 0, 1, 1), 1.0);
        assert_eq!(m.d(0, 1, 0, 0), 0.0);
        let m3 = profile_moments(&RadialProfile::normal(3).unwrap(), 3).unwrap();
        assert_eq!(m3.c, DMatrix::identity(3, 3));
    }

    #[test]
    fn gamma_moments_from_quadrature() {
        // shape 3, scale 1 on R^2: E|w|^2 = Gamma(6)/Gamma(4) = 20, so C = 10 I.
        let p = RadialProfile::gamma(2, 3.0, 1.0).unwrap();
        let m = profile_moments(&p, 2).unwrap();
        assert!((m.c[(0, 0)] - 10.0).abs() < 1e-8 && m.c[(0, 1)] == 0.0);
        // E|w|^4 = Gamma(8)/Gamma(4) = 840.
        assert!((m.d(0, 0, 0, 0) - 3.0 * 840.0 / 8.0).abs() < 1e-6);
    }

    #[test]
    fn unnormalized_custom_kernel_is_rejected() {
        let p = RadialProfile::custom(2, |t| (-t).exp(), None).unwrap();
        assert!(matches!(
            profile_moments(&p, 2),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn heavy_tailed_kernel_has_divergent_fourth_moment() {
        // (2/pi) (1 + t)^-3 on R^2: unit mass, finite second moment, log-divergent fourth.
        let c = 2.0 / std::f64::consts::PI;
        let p = RadialProfile::custom(2, move |t| c / (1.0 + t).powi(3), None).unwrap();
        assert!((p.euclidean_radial_moment(0).unwrap() - 1.0).abs() < 1e-8);
        assert!(matches!(
            profile_moments(&p, 2),
            Err(Error::DivergentMoment)
        ));
    }

    #[test]
    fn contraction_examples() {
        let normal = profile_moments(&RadialProfile::normal(2).unwrap(), 2).unwrap();
        assert_eq!(
            contract_tr_rd(&DMatrix::zeros(2, 2), &normal).unwrap(),
            DMatrix::zeros(2, 2)
        );
        assert_eq!(
            contract_tr_rd(&DMatrix::identity(2, 2), &normal).unwrap(),
            diag(&[4.0, 4.0])
        );
        let r = diag(&[1.0, 2.0]);
        let direct = contract_tr_rd(&r, &normal).unwrap();
        assert_eq!(direct, diag(&[5.0, 7.0]));
        // The 2R + n diag(R) shorthand differs when R is not scalar.
        let shorthand = &r * 2.0 + diag(&[1.0, 2.0]) * 2.0;
        assert_eq!(shorthand, diag(&[4.0, 8.0]));
        assert!(contract_tr_rd(&DMatrix::zeros(3, 3), &normal).is_err());
    }

    #[test]
    fn flat_case_is_exact() {
        let m = Manifold::euclidean(2).unwrap();
        let t =
            ConcentrationTensor::new(DMatrix::from_row_slice(2, 2, &[5.0, 1.0, 1.0, 3.0])).unwrap();
        let r = approx_constants(&m, &m.origin(), &t, &RadialProfile::normal(2).unwrap()).unwrap();
        let t_inv = t.matrix().clone().try_inverse().unwrap();
        assert!((&r.sigma_matrix - &t_inv).amax() < 1e-14);
        assert!((r.k_inv - 14f64.powf(-0.5)).abs() < 1e-14);
        let ratio =
            invariant_ratio(&t, &RadialProfile::normal(2).unwrap(), &m, &m.origin()).unwrap();
        assert_eq!(ratio, DMatrix::identity(2, 2));
        let both = normal_approx_cov(&m, &m.origin(), &t).unwrap();
        assert!((&both.diag_shorthand - &t_inv).amax() < 1e-14);
    }

    #[test]
    fn curved_isotropic_examples() {
        let profile = RadialProfile::normal(2).unwrap();
        let s = Manifold::sphere(2).unwrap();
        let t = ConcentrationTensor::from_sigma(2, 0.3).unwrap();
        let r = approx_constants(&s, &s.origin(), &t, &profile).unwrap();
        let expected = (1.0 - 2.0 / 3.0 * 0.09) / (1.0 - 0.09 / 3.0) * 0.09;
        assert!(
            (r.sigma_matrix[(0, 0)] - expected).abs() < 1e-15
                && r.sigma_matrix[(0, 1)].abs() < 1e-16
        );
        assert!((expected - 0.08722).abs() < 1e-5);

        let h = Manifold::hyperbolic(2).unwrap();
        let r = approx_constants(&h, &h.origin(), &t, &profile).unwrap();
        let expected = 1.06 / 1.03 * 0.09;
        assert!((r.sigma_matrix[(1, 1)] - expected).abs() < 1e-15);
        assert!((expected - 0.09262).abs() < 1e-5);

        let ratio = invariant_ratio(&t, &profile, &s, &s.origin()).unwrap();
        assert!((ratio - DMatrix::identity(2, 2) * (0.94 / 0.97)).amax() < 1e-15);

        let both = normal_approx_cov(&s, &s.origin(), &t).unwrap();
        assert!((&both.diag_shorthand - &both.primary.sigma_matrix).amax() < 1e-15);
    }

    #[test]
    fn anisotropic_variants_differ() {
        let s = Manifold::sphere(2).unwrap();
        let t = ConcentrationTensor::new(diag(&[1.0 / 0.04, 1.0 / 0.01])).unwrap();
        let both = normal_approx_cov(&s, &s.origin(), &t).unwrap();
        let gap = (&both.diag_shorthand - &both.primary.sigma_matrix).amax();
        assert!(gap > 1e-6, "variants should differ, gap {gap}");
    }

    #[test]
    fn weak_concentration_is_out_of_range() {
        let s = Manifold::sphere(2).unwrap();
        let t = ConcentrationTensor::from_sigma(2, 2.0).unwrap();
        let r = approx_constants(&s, &s.origin(), &t, &RadialProfile::normal(2).unwrap());
        assert!(matches!(r, Err(Error::ApproximationOutOfRange(_))));
    }

    #[test]
    fn prediction_examples() {
        let p = constant_curvature_prediction(1, 2, 0.3, ApproxOrder::Fourth, 7.0 / 40.0).unwrap();
        assert!((p.sigma_axis - 0.08730).abs() < 5e-6, "{}", p.sigma_axis);
        let p = constant_curvature_prediction(-1, 2, 0.3, ApproxOrder::Fourth, 7.0 / 40.0).unwrap();
        assert!((p.sigma_axis - 0.09270).abs() < 5e-6, "{}", p.sigma_axis);
        for kappa in [-1, 1] {
            let p =
                constant_curvature_prediction(kappa, 2, 1e-4, ApproxOrder::Fourth, 0.2).unwrap();
            assert!((p.sigma_axis / 1e-8 - 1.0).abs() < 1e-7);
        }
        let flat = constant_curvature_prediction(0, 2, 0.7, ApproxOrder::Fourth, 0.2).unwrap();
        assert_eq!(flat.sigma_axis, 0.7 * 0.7);
        assert!(constant_curvature_prediction(2, 2, 0.3, ApproxOrder::Second, 0.2).is_err());
        assert!(constant_curvature_prediction(1, 1, 0.3, ApproxOrder::Second, 0.2).is_err());
        assert!(matches!(
            constant_curvature_prediction(1, 2, 2.0, ApproxOrder::Second, 0.2),
            Err(Error::ApproximationOutOfRange(_))
        ));
    }
}
