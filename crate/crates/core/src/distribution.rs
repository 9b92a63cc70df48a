//! Centered distributions `dQ(p) = k f(T(Log_q p, Log_q p)) dV(p)` with folding.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::covariance::{factor_concentration, SqrtFactor};
use crate::error::{Error, Result};
use crate::manifold::{Frame, Manifold, ManifoldKind, Point};
use crate::profile::RadialProfile;
use crate::quadrature::{
    exact_moments, integrate, integrate_with_breaks, radial_breaks, truncation_radius,
    QuadratureSpec,
};

pub const DEFAULT_FOLD_TOL: f64 = 1e-12;

/// Leaf count above which folding is reported as unsupported.
const MAX_FOLD_SHELLS: usize = 10_000;

/// Symmetric positive-definite concentration tensor in the frame at the center.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcentrationTensor {
    matrix: DMatrix<f64>,
}

impl ConcentrationTensor {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::NotPositiveDefinite(format!(
                "matrix is {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NotPositiveDefinite("non-finite entry".into()));
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * matrix.amax().max(1.0) {
            return Err(Error::NotPositiveDefinite(format!("asymmetry {asym:e}")));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let min_eig = sym.clone().symmetric_eigen().eigenvalues.min();
        if !(min_eig > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "smallest eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { matrix: sym })
    }

    /// `lambda I_n`.
    pub fn isotropic(n: usize, lambda: f64) -> Result<Self> {
        Self::new(DMatrix::identity(n, n) * lambda)
    }

    /// `sigma^-2 I_n`, the standard normal concentration.
    pub fn from_sigma(n: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Self::isotropic(n, 1.0 / (sigma * sigma))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The common eigenvalue when `T = lambda I`.
    pub fn isotropic_value(&self) -> Option<f64> {
        let lambda = self.matrix[(0, 0)];
        let n = self.dim();
        let scalar = DMatrix::identity(n, n) * lambda;
        ((&self.matrix - scalar).amax() <= 1e-12 * lambda).then_some(lambda)
    }

    /// `T(v, v) = v' T v`.
    pub fn quadratic(&self, v: &[f64]) -> f64 {
        self.matrix
            .row_iter()
            .zip(v)
            .map(|(row, vi)| vi * row.iter().zip(v).map(|(t, vj)| t * vj).sum::<f64>())
            .sum()
    }

    /// `A T A'`: the same tensor expressed in the frame rotated by `A`.
    pub fn conjugated(&self, a: &DMatrix<f64>) -> Result<Self> {
        Self::new(a * &self.matrix * a.transpose())
    }
}

#[derive(Clone, Debug)]
pub struct CenteredDistribution {
    frame: Frame,
    tensor: ConcentrationTensor,
    profile: RadialProfile,
    norm_const: f64,
    fold_radius: f64,
    fold_tol: f64,
    quadrature: QuadratureSpec,
}

/// Builds a distribution centered at `q` in the canonical frame at `q`.
pub fn build_distribution(
    manifold: &Manifold,
    q: &Point,
    tensor: ConcentrationTensor,
    profile: RadialProfile,
    fold_tol: f64,
) -> Result<CenteredDistribution> {
    let frame = manifold.frame_at(q)?;
    CenteredDistribution::build(frame, tensor, profile, fold_tol, QuadratureSpec::default())
}

impl CenteredDistribution {
    /// Builds a distribution in an explicit frame with explicit quadrature settings.
    pub fn build(
        frame: Frame,
        tensor: ConcentrationTensor,
        profile: RadialProfile,
        fold_tol: f64,
        quadrature: QuadratureSpec,
    ) -> Result<Self> {
        let manifold = frame.manifold();
        let n = manifold.dim();
        if tensor.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: tensor.dim(),
            });
        }
        if profile.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: profile.dim(),
            });
        }
        if !(fold_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "fold tolerance must be positive, got {fold_tol}"
            )));
        }
        quadrature.validate()?;

        let k_inv = match tensor.isotropic_value() {
            Some(lambda) => exact_moments(&manifold, &profile, lambda, &quadrature)?.k_inv,
            None => anisotropic_k_inv(&manifold, &tensor, &profile, &quadrature)?,
        };
        let norm_const = 1.0 / k_inv;

        let fold_radius = match manifold.kind() {
            ManifoldKind::Sphere => fold_radius(
                &manifold,
                &tensor,
                &profile,
                norm_const,
                fold_tol,
                &quadrature,
            )?,
            _ => f64::INFINITY,
        };
        Ok(Self {
            frame,
            tensor,
            profile,
            norm_const,
            fold_radius,
            fold_tol,
            quadrature,
        })
    }

    pub fn manifold(&self) -> Manifold {
        self.frame.manifold()
    }

    pub fn center(&self) -> &Point {
        self.frame.base()
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn tensor(&self) -> &ConcentrationTensor {
        &self.tensor
    }

    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }

    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    /// Leaves with norm above this radius are dropped; infinite on single-leaf manifolds.
    pub fn fold_radius(&self) -> f64 {
        self.fold_radius
    }

    pub fn fold_tol(&self) -> f64 {
        self.fold_tol
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quadrature
    }

    /// Short human-readable identity used to tag sample batches.
    pub fn id(&self) -> String {
        let m = self.manifold();
        format!(
            "{:?}{}:{:?}:T={:?}:q={:?}",
            m.kind(),
            m.dim(),
            self.profile.kind(),
            self.tensor.matrix().as_slice(),
            self.center().coords()
        )
    }

    /// Same distribution with the fold radius overridden (for convergence checks).
    pub fn with_fold_radius(mut self, radius: f64) -> Self {
        self.fold_radius = radius;
        self
    }

    /// Folded density with respect to the volume measure.
    pub fn density_at(&self, p: &Point) -> Result<f64> {
        let manifold = self.manifold();
        let p = manifold.point(p.coords().to_vec())?;
        let leaves = self.frame.leaves(&p, self.fold_radius)?;
        let sum: f64 = leaves
            .iter()
            .map(|w| self.profile.eval(self.tensor.quadratic(w)))
            .sum();
        Ok(self.norm_const * sum)
    }

    /// Total mass of [`density_at`](Self::density_at) over the surface (`n = 2` only).
    ///
    /// Integrates in geodesic polar coordinates around the center: adaptive in
    /// the radius, trapezoidal over `angles` equally spaced directions. On the
    /// sphere the radius stops `1e-5` short of the antipode, where the
    /// log-map is undefined.
    pub fn total_mass(&self, angles: usize, spec: &QuadratureSpec) -> Result<f64> {
        let manifold = self.manifold();
        if manifold.dim() != 2 {
            return Err(Error::Unsupported(
                "polar mass check needs a two-dimensional manifold".into(),
            ));
        }
        if angles < 3 {
            return Err(Error::InvalidParameter(format!(
                "need at least 3 angles, got {angles}"
            )));
        }
        let eig = self.tensor.matrix().clone().symmetric_eigen().eigenvalues;
        let (lambda_min, lambda_max) = (eig.min(), eig.max());
        let support = self.profile.support_radius(lambda_max);
        let (jacobian, outer): (fn(f64) -> f64, f64) = match manifold.kind() {
            ManifoldKind::Sphere => (f64::sin, PI - 1e-5),
            ManifoldKind::Hyperbolic => (
                f64::sinh,
                truncation_radius(&manifold, &self.profile, lambda_min, &self.quadrature),
            ),
            ManifoldKind::Euclidean => (
                |r| r,
                truncation_radius(&manifold, &self.profile, lambda_min, &self.quadrature),
            ),
        };
        let mut breaks = vec![0.0];
        // The support edge of the smallest-radius direction onward may be a jump.
        let support_far = self.profile.support_radius(lambda_min);
        for b in [support, support_far] {
            if b.is_finite() && b < outer && breaks.last().is_some_and(|&l| b > l) {
                breaks.push(b);
            }
        }
        breaks.push(outer);
        let failure = std::cell::RefCell::new(None);
        let ring = |r: f64| -> f64 {
            let mut sum = 0.0;
            for k in 0..angles {
                let (sin, cos) = (2.0 * PI * k as f64 / angles as f64).sin_cos();
                let p = self.frame.exp(&[r * cos, r * sin]);
                match self.density_at(&p) {
                    Ok(d) => sum += d,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        return f64::NAN;
                    }
                }
            }
            2.0 * PI * sum / angles as f64 * jacobian(r)
        };
        let est = integrate_with_breaks(ring, &breaks, spec);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(est?.value)
    }
}

/// `int f(v'Tv) theta(|v|) dv` over the tangent plane for a general SPD tensor.
///
/// Substituting `v = S w` turns the integral into
/// `|S| int_0^{2 pi} int_0^inf f(rho^2) theta(rho |S u(phi)|) rho d rho d phi`.
fn anisotropic_k_inv(
    manifold: &Manifold,
    tensor: &ConcentrationTensor,
    profile: &RadialProfile,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let factor = factor_concentration(tensor)?;
    let det_s = factor.det_s();
    let n = manifold.dim();
    match manifold.kind() {
        ManifoldKind::Euclidean => Ok(det_s * profile.euclidean_radial_moment(0)?),
        ManifoldKind::Sphere if n == 2 => {
            sphere_polar_k_inv(manifold, &factor, profile, spec).map(|v| det_s * v)
        }
        ManifoldKind::Sphere => Err(Error::Unsupported(
            "anisotropic tensors on spheres of dimension > 2".into(),
        )),
        ManifoldKind::Hyperbolic => Err(Error::Unsupported(
            "anisotropic tensors on hyperbolic space".into(),
        )),
    }
}

fn sphere_polar_k_inv(
    manifold: &Manifold,
    factor: &SqrtFactor,
    profile: &RadialProfile,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let s = factor.s();
    let inner_spec = QuadratureSpec {
        rel_tol: (spec.rel_tol * 1e-2).max(1e-15),
        ..*spec
    };
    let radius = profile.euclidean_radius(&inner_spec);
    let inner = |phi: f64| -> Result<f64> {
        let (sin, cos) = phi.sin_cos();
        let stretch = ((s[(0, 0)] * cos + s[(0, 1)] * sin).powi(2)
            + (s[(1, 0)] * cos + s[(1, 1)] * sin).powi(2))
        .sqrt();
        let mut breaks = vec![0.0];
        let mut k = 1.0;
        while k * PI / stretch < radius {
            breaks.push(k * PI / stretch);
            k += 1.0;
        }
        breaks.push(radius);
        let g = |rho: f64| profile.eval(rho * rho) * manifold.volume_density(rho * stretch) * rho;
        integrate_with_breaks(g, &breaks, &inner_spec).map(|e| e.value)
    };
    // Surface the first inner failure instead of integrating NaN.
    let failure = std::cell::RefCell::new(None);
    let outer = integrate(
        |phi| match inner(phi) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        },
        0.0,
        2.0 * PI,
        spec,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(outer?.value)
}

/// Smallest `(2m + 1) pi`, `m >= 1`, whose discarded tangent mass is below `fold_tol`.
fn fold_radius(
    manifold: &Manifold,
    tensor: &ConcentrationTensor,
    profile: &RadialProfile,
    norm_const: f64,
    fold_tol: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    // The isotropic kernel at the smallest eigenvalue dominates f(v'Tv) for decreasing tails.
    let lambda_min = tensor.matrix().clone().symmetric_eigen().eigenvalues.min();
    let n = manifold.dim();
    let outer = truncation_radius(manifold, profile, lambda_min, spec);
    let area = crate::quadrature::unit_sphere_area(n);
    let envelope = |r: f64| area * profile.eval(lambda_min * r * r) * r.powi(n as i32 - 1);
    for m in 1..=MAX_FOLD_SHELLS {
        let radius = (2 * m + 1) as f64 * PI;
        if radius >= outer {
            return Ok(radius);
        }
        let breaks: Vec<f64> = radial_breaks(manifold, outer)
            .into_iter()
            .filter(|&b| b >= radius)
            .collect();
        let mut breaks = breaks;
        if breaks.first() != Some(&radius) {
            breaks.insert(0, radius);
        }
        let tail = integrate_with_breaks(envelope, &breaks, spec)?.value;
        if norm_const * tail < fold_tol {
            return Ok(radius);
        }
    }
    Err(Error::Unsupported(
        "folding needs more than the supported number of leaves".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_validation() {
        assert!(
            ConcentrationTensor::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])).is_err()
        );
        assert!(
            ConcentrationTensor::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err()
        );
        assert!(
            ConcentrationTensor::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).is_err()
        );
        let t = ConcentrationTensor::from_sigma(2, 0.5).unwrap();
        assert_eq!(t.isotropic_value(), Some(4.0));
        assert!(
            ConcentrationTensor::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                1.0, 2.0
            ])))
            .unwrap()
            .isotropic_value()
            .is_none()
        );
    }

    #[test]
    fn flat_gaussian_peak() {
        let m = Manifold::euclidean(2).unwrap();
        let q = m.origin();
        let d = build_distribution(
            &m,
            &q,
            ConcentrationTensor::from_sigma(2, 0.5).unwrap(),
            RadialProfile::normal(2).unwrap(),
            DEFAULT_FOLD_TOL,
        )
        .unwrap();
        let peak = d.density_at(&q).unwrap();
        assert!((peak - 1.0 / (2.0 * PI * 0.25)).abs() < 1e-10);
        assert!((peak - std::f64::consts::FRAC_2_PI).abs() < 1e-12);
    }

    #[test]
    fn sphere_fold_radius_for_moderate_sigma() {
        let m = Manifold::sphere(2).unwrap();
        let d = build_distribution(
            &m,
            &m.origin(),
            ConcentrationTensor::from_sigma(2, 0.3).unwrap(),
            RadialProfile::normal(2).unwrap(),
            1e-12,
        )
        .unwrap();
        assert_eq!(d.fold_radius(), 3.0 * PI);
        // Second-leaf term at the center, relative to the first.
        let second_leaf = (-(2.0 * PI).powi(2) / (2.0 * 0.09)).exp();
        assert!(second_leaf < 1e-95);
    }

    #[test]
    fn hyperbolic_single_leaf_density() {
        let m = Manifold::hyperbolic(2).unwrap();
        let d = build_distribution(
            &m,
            &m.origin(),
            ConcentrationTensor::from_sigma(2, 1.0).unwrap(),
            RadialProfile::normal(2).unwrap(),
            DEFAULT_FOLD_TOL,
        )
        .unwrap();
        let p = m.frame_at(&m.origin()).unwrap().exp(&[0.6, 0.8]);
        let expected = d.norm_const() / (2.0 * PI) * (-0.5f64).exp();
        assert!((d.density_at(&p).unwrap() - expected).abs() < 1e-14);
        assert!(d.fold_radius().is_infinite());
    }

    #[test]
    fn cut_locus_density_is_an_error() {
        let m = Manifold::sphere(2).unwrap();
        let d = build_distribution(
            &m,
            &m.origin(),
            ConcentrationTensor::from_sigma(2, 0.3).unwrap(),
            RadialProfile::normal(2).unwrap(),
            DEFAULT_FOLD_TOL,
        )
        .unwrap();
        let anti = m.point(vec![0.0, 0.0, -1.0]).unwrap();
        assert!(matches!(d.density_at(&anti), Err(Error::CutLocus)));
    }

    #[test]
    fn anisotropic_hyperbolic_is_unsupported() {
        let m = Manifold::hyperbolic(2).unwrap();
        let t =
            ConcentrationTensor::new(DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0])).unwrap();
        let r = build_distribution(
            &m,
            &m.origin(),
            t,
            RadialProfile::normal(2).unwrap(),
            DEFAULT_FOLD_TOL,
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn anisotropic_flat_normalizer_is_det_s() {
        let m = Manifold::euclidean(2).unwrap();
        let t = ConcentrationTensor::new(DMatrix::from_row_slice(2, 2, &[25.0, 3.0, 3.0, 100.0]))
            .unwrap();
        let det = 2500.0 - 9.0;
        let d = build_distribution(
            &m,
            &m.origin(),
            t,
            RadialProfile::normal(2).unwrap(),
            DEFAULT_FOLD_TOL,
        )
        .unwrap();
        assert!((d.norm_const() - f64::sqrt(det)).abs() < 1e-8 * f64::sqrt(det));
    }
}
