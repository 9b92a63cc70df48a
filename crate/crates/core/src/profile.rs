//! Radial kernels `f` of centered distributions, evaluated at `t = T(v, v)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, unit_sphere_area, QuadratureSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProfileKind {
    Normal,
    /// `exp(kappa cos(sqrt(t)))`, supported on `t <= pi^2`.
    VonMisesFisher {
        kappa: f64,
    },
    /// Radial density `r^(shape-1) exp(-r / scale)` with `r = sqrt(t)`.
    Gamma {
        shape: f64,
        scale: f64,
    },
    Custom,
}

type KernelFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A kernel `t -> f(t) >= 0` on `[0, inf)` for a fixed dimension `n`.
///
/// Built-in kernels other than the normal one carry a constant `c0` chosen
/// numerically so that `int_{R^n} f(w'w) dw = 1`.
#[derive(Clone)]
pub struct RadialProfile {
    kind: ProfileKind,
    dim: usize,
    c0: f64,
    support: Option<f64>,
    custom: Option<KernelFn>,
}

impl fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialProfile")
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .field("c0", &self.c0)
            .field("support", &self.support)
            .finish()
    }
}

impl RadialProfile {
    pub fn normal(n: usize) -> Result<Self> {
        Self::check_dim(n)?;
        Ok(Self {
            kind: ProfileKind::Normal,
            dim: n,
            c0: (2.0 * PI).powf(-(n as f64) / 2.0),
            support: None,
            custom: None,
        })
    }

    pub fn von_mises_fisher(n: usize, kappa: f64) -> Result<Self> {
        Self::check_dim(n)?;
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "vMF concentration must be >= 0, got {kappa}"
            )));
        }
        let raw = Self {
            kind: ProfileKind::VonMisesFisher { kappa },
            dim: n,
            c0: 1.0,
            support: Some(PI * PI),
            custom: None,
        };
        raw.normalized()
    }

    pub fn gamma(n: usize, shape: f64, scale: f64) -> Result<Self> {
        Self::check_dim(n)?;
        if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma needs shape, scale > 0, got {shape}, {scale}"
            )));
        }
        let raw = Self {
            kind: ProfileKind::Gamma { shape, scale },
            dim: n,
            c0: 1.0,
            support: None,
            custom: None,
        };
        raw.normalized()
    }

    /// User kernel, used as given (no normalization). `support` bounds `t` when finite.
    pub fn custom<F>(n: usize, f: F, support: Option<f64>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::check_dim(n)?;
        Ok(Self {
            kind: ProfileKind::Custom,
            dim: n,
            c0: 1.0,
            support,
            custom: Some(Arc::new(f)),
        })
    }

    /// Builds a kernel by kind; `params` holds `kappa` for vMF and `(shape, scale)` for gamma.
    pub fn make(kind: &str, n: usize, params: &[f64]) -> Result<Self> {
        match (kind, params) {
            ("normal", []) => Self::normal(n),
            ("vmf", [kappa]) => Self::von_mises_fisher(n, *kappa),
            ("gamma", [shape, scale]) => Self::gamma(n, *shape, *scale),
            _ => Err(Error::InvalidParameter(format!(
                "unknown profile {kind} with {} parameters",
                params.len()
            ))),
        }
    }

    fn check_dim(n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "profile dimension must be positive".into(),
            ));
        }
        Ok(())
    }

    fn normalized(mut self) -> Result<Self> {
        let mass = self.euclidean_radial_moment(0)?;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::NotNormalized(mass));
        }
        self.c0 = 1.0 / mass;
        Ok(self)
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normal(&self) -> bool {
        self.kind == ProfileKind::Normal
    }

    pub fn support_bounded(&self) -> bool {
        self.support.is_some()
    }

    /// Whether the kernel needs more than the first leaf on a compact manifold.
    pub fn fold_required(&self) -> bool {
        !self.support_bounded()
    }

    /// Largest radius `r` with `lambda r^2` inside the support.
    pub fn support_radius(&self, lambda: f64) -> f64 {
        self.support.map_or(f64::INFINITY, |t| (t / lambda).sqrt())
    }

    /// Typical spread of the kernel in units of `sqrt(t)`.
    pub(crate) fn length_scale(&self) -> f64 {
        match self.kind {
            ProfileKind::Gamma { shape, scale } => scale * shape.max(1.0),
            ProfileKind::VonMisesFisher { .. } => PI,
            _ => 1.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 || self.support.is_some_and(|s| t > s) {
            return 0.0;
        }
        match self.kind {
            ProfileKind::Normal => self.c0 * (-0.5 * t).exp(),
            // Shifted by -kappa so large concentrations stay finite; c0 absorbs exp(kappa).
            ProfileKind::VonMisesFisher { kappa } => {
                self.c0 * (kappa * (t.sqrt().cos() - 1.0)).exp()
            }
            ProfileKind::Gamma { shape, scale } => {
                let r = t.sqrt();
                self.c0 * r.powf(shape - 1.0) * (-r / scale).exp()
            }
            ProfileKind::Custom => self.custom.as_ref().map_or(0.0, |f| f(t)),
        }
    }

    /// `int_{R^n} |w|^p f(w'w) dw` by radial quadrature.
    pub fn euclidean_radial_moment(&self, power: i32) -> Result<f64> {
        self.euclidean_radial_moment_to(power, None)
    }

    pub(crate) fn euclidean_radial_moment_to(
        &self,
        power: i32,
        radius: Option<f64>,
    ) -> Result<f64> {
        let n = self.dim;
        let area = unit_sphere_area(n);
        let spec = QuadratureSpec::default().with_rel_tol(1e-13);
        let radius = radius.unwrap_or_else(|| self.euclidean_radius(&spec));
        let g = |r: f64| area * self.eval(r * r) * r.powi(n as i32 - 1 + power);
        let mut breaks = vec![0.0];
        // Split at the mode region so a singular origin does not starve the tail.
        let knee = (self.length_scale()).min(radius / 2.0);
        breaks.push(knee);
        breaks.push(radius);
        integrate_breaks(g, &breaks, &spec)
    }

    /// Truncation radius for Euclidean integrals of the kernel (`lambda = 1`, `theta = 1`).
    pub(crate) fn euclidean_radius(&self, spec: &QuadratureSpec) -> f64 {
        if let Some(t) = self.support {
            return t.sqrt();
        }
        let n = self.dim as i32;
        let cap = if self.is_normal() {
            60.0
        } else {
            1e4 * self.length_scale()
        };
        // Extra powers of r cover the fourth moment as well.
        crate::quadrature::auto_radius(
            |r| self.eval(r * r) * r.powi(n + 5),
            self.length_scale() / 8.0,
            spec.abs_tol * 1e-3,
            cap,
        )
    }
}

fn integrate_breaks(g: impl Fn(f64) -> f64, breaks: &[f64], spec: &QuadratureSpec) -> Result<f64> {
    let mut total = 0.0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            total += integrate(&g, w[0], w[1], spec)?.value;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_kernel_value_at_zero() {
        let p = RadialProfile::normal(2).unwrap();
        assert!((p.eval(0.0) - 1.0 / (2.0 * PI)).abs() < 1e-16);
        assert!(p.fold_required() && !p.support_bounded());
        assert!((p.euclidean_radial_moment(0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vmf_with_zero_concentration_is_flat_on_its_support() {
        let p = RadialProfile::von_mises_fisher(2, 0.0).unwrap();
        assert!((p.eval(0.0) - p.eval(9.0)).abs() < 1e-15);
        assert_eq!(p.eval(PI * PI + 1e-9), 0.0);
        // Uniform on the disc of radius pi.
        assert!((p.eval(1.0) - 1.0 / PI.powi(3)).abs() < 1e-12);
        assert!(p.support_bounded() && !p.fold_required());
    }

    #[test]
    fn vmf_reads_the_kernel_through_the_square_root() {
        let p = RadialProfile::von_mises_fisher(2, 3.0).unwrap();
        let d: f64 = 1.1;
        let ratio = p.eval(d * d) / p.eval(0.0);
        assert!((ratio - (3.0 * (d.cos() - 1.0)).exp()).abs() < 1e-14);
    }

    #[test]
    fn gamma_normalizer_matches_closed_form() {
        // shape 1 on R^2: int 2 pi r exp(-r / theta) dr = 2 pi theta^2.
        for theta in [0.3, 1.0, 2.5] {
            let p = RadialProfile::gamma(2, 1.0, theta).unwrap();
            let c0 = p.eval(0.0);
            assert!(
                (1.0 / c0 - 2.0 * PI * theta * theta).abs() < 1e-9 * theta * theta,
                "theta={theta}"
            );
        }
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(RadialProfile::von_mises_fisher(2, -1.0).is_err());
        assert!(RadialProfile::gamma(2, 0.0, 1.0).is_err());
        assert!(RadialProfile::gamma(2, 1.0, -1.0).is_err());
        assert!(RadialProfile::make("cauchy", 2, &[]).is_err());
        assert!(RadialProfile::make("vmf", 2, &[]).is_err());
        assert!(RadialProfile::normal(0).is_err());
    }
}
