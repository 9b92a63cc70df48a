//! Closed-form geometry of the three built-in constant-curvature manifolds.
//!
//! Points live in ambient coordinates: `R^n` for the Euclidean space, unit
//! vectors of `R^{n+1}` for the sphere, and the upper sheet of the hyperboloid
//! `<x, x>_M = -1` (last coordinate time-like) for hyperbolic space. Tangent
//! vectors are stored as coefficients in the deterministic orthonormal frame
//! returned by [`Manifold::frame_at`], which is what makes them normal
//! coordinates at their base point.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `<q, p>` threshold below which a sphere point counts as antipodal.
pub const CUT_LOCUS_TOL: f64 = 1e-12;

const POINT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ManifoldKind {
    Euclidean,
    Sphere,
    Hyperbolic,
}

/// A complete constant-curvature Riemannian manifold of dimension `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Manifold {
    kind: ManifoldKind,
    dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

/// Tangent vector at `base`, as coefficients in the frame at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub coeffs: Vec<f64>,
}

impl TangentVector {
    pub fn norm(&self) -> f64 {
        norm(&self.coeffs)
    }
}

/// Orthonormal basis of the tangent space at `base`, in ambient coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    manifold: Manifold,
    base: Point,
    axes: Vec<Vec<f64>>,
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn minkowski(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() - 1;
    dot(&a[..n], &b[..n]) - a[n] * b[n]
}

impl Manifold {
    pub fn new(kind: ManifoldKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "manifold dimension must be positive".into(),
            ));
        }
        Ok(Self { kind, dim })
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::new(ManifoldKind::Euclidean, dim)
    }

    pub fn sphere(dim: usize) -> Result<Self> {
        Self::new(ManifoldKind::Sphere, dim)
    }

    pub fn hyperbolic(dim: usize) -> Result<Self> {
        Self::new(ManifoldKind::Hyperbolic, dim)
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sectional curvature: `+1`, `-1` or `0`.
    pub fn curvature(&self) -> i32 {
        match self.kind {
            ManifoldKind::Euclidean => 0,
            ManifoldKind::Sphere => 1,
            ManifoldKind::Hyperbolic => -1,
        }
    }

    pub fn injectivity_radius(&self) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => PI,
            _ => f64::INFINITY,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Euclidean => self.dim,
            _ => self.dim + 1,
        }
    }

    /// Ambient inner product restricted to tangent vectors (Minkowski on the hyperboloid).
    pub fn ambient_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            ManifoldKind::Hyperbolic => minkowski(a, b),
            _ => dot(a, b),
        }
    }

    /// Validates ambient coordinates as a point of this manifold.
    pub fn point(&self, coords: Vec<f64>) -> Result<Point> {
        if coords.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                got: coords.len(),
            });
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        match self.kind {
            ManifoldKind::Euclidean => {}
            ManifoldKind::Sphere => {
                let defect = (norm(&coords) - 1.0).abs();
                if defect > POINT_TOL {
                    return Err(Error::InvalidPoint(format!(
                        "not on the unit sphere (|x| - 1 = {defect:e})"
                    )));
                }
            }
            ManifoldKind::Hyperbolic => {
                let t = coords[self.dim];
                if t < 1.0 {
                    return Err(Error::InvalidPoint(format!("last coordinate {t} < 1")));
                }
                // Rounding in <x,x>_M grows like eps * t^2 far from the apex.
                let defect = (minkowski(&coords, &coords) + 1.0).abs();
                if defect > POINT_TOL * t * t {
                    return Err(Error::InvalidPoint(format!(
                        "not on the hyperboloid (<x,x> + 1 = {defect:e})"
                    )));
                }
            }
        }
        Ok(Point { coords })
    }

    /// Canonical base point: the origin, the pole `e_{n+1}`, or the hyperboloid apex.
    pub fn origin(&self) -> Point {
        let mut coords = vec![0.0; self.ambient_dim()];
        if self.kind != ManifoldKind::Euclidean {
            coords[self.dim] = 1.0;
        }
        Point { coords }
    }

    /// Projects exp-map output back onto the manifold.
    fn retract(&self, mut coords: Vec<f64>) -> Point {
        match self.kind {
            ManifoldKind::Euclidean => {}
            ManifoldKind::Sphere => {
                let r = norm(&coords);
                coords.iter_mut().for_each(|x| *x /= r);
            }
            ManifoldKind::Hyperbolic => {
                let n = self.dim;
                coords[n] = (1.0 + dot(&coords[..n], &coords[..n])).sqrt();
            }
        }
        Point { coords }
    }

    fn check(&self, q: &Point) -> Result<()> {
        self.point(q.coords.clone()).map(|_| ())
    }

    pub fn frame_at(&self, q: &Point) -> Result<Frame> {
        self.check(q)?;
        let n = self.dim;
        let axes = match self.kind {
            ManifoldKind::Euclidean => (0..n)
                .map(|i| {
                    let mut e = vec![0.0; n];
                    e[i] = 1.0;
                    e
                })
                .collect(),
            ManifoldKind::Sphere => sphere_frame(&q.coords),
            ManifoldKind::Hyperbolic => {
                // Boost of the apex frame: columns of the Lorentz boost taking the apex to q.
                let x = &q.coords[..n];
                let t = q.coords[n];
                (0..n)
                    .map(|i| {
                        let mut axis: Vec<f64> = x.iter().map(|xj| x[i] * xj / (1.0 + t)).collect();
                        axis[i] += 1.0;
                        axis.push(x[i]);
                        axis
                    })
                    .collect()
            }
        };
        Ok(Frame {
            manifold: *self,
            base: q.clone(),
            axes,
        })
    }

    pub fn exp_map(&self, v: &TangentVector) -> Result<Point> {
        let frame = self.frame_at(&v.base)?;
        frame.check_len(&v.coeffs)?;
        Ok(frame.exp(&v.coeffs))
    }

    /// Principal leaf of the log-map.
    pub fn log_map(&self, q: &Point, p: &Point) -> Result<TangentVector> {
        let frame = self.frame_at(q)?;
        self.check(p)?;
        Ok(TangentVector {
            base: q.clone(),
            coeffs: frame.log(p)?,
        })
    }

    /// Every leaf of the multi-valued log-map with norm at most `radius_cap`, by norm ascending.
    pub fn multi_log(&self, q: &Point, p: &Point, radius_cap: f64) -> Result<Vec<TangentVector>> {
        if !(radius_cap > 0.0 && radius_cap.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "radius cap must be positive and finite, got {radius_cap}"
            )));
        }
        let frame = self.frame_at(q)?;
        self.check(p)?;
        Ok(frame
            .leaves(p, radius_cap)?
            .into_iter()
            .map(|coeffs| TangentVector {
                base: q.clone(),
                coeffs,
            })
            .collect())
    }

    /// Geodesic distance; defined everywhere, including antipodal sphere points.
    pub fn distance(&self, q: &Point, p: &Point) -> f64 {
        let diff: Vec<f64> = q.coords.iter().zip(&p.coords).map(|(a, b)| b - a).collect();
        match self.kind {
            ManifoldKind::Euclidean => norm(&diff),
            ManifoldKind::Sphere => {
                let sum: Vec<f64> = q.coords.iter().zip(&p.coords).map(|(a, b)| a + b).collect();
                2.0 * norm(&diff).atan2(norm(&sum))
            }
            ManifoldKind::Hyperbolic => {
                2.0 * (minkowski(&diff, &diff).max(0.0).sqrt() / 2.0).asinh()
            }
        }
    }

    /// Volume density `theta(r)` of the exponential map in normal coordinates.
    pub fn volume_density(&self, r: f64) -> f64 {
        let r = r.abs();
        if r == 0.0 {
            return 1.0;
        }
        let exponent = (self.dim - 1) as i32;
        match self.kind {
            ManifoldKind::Euclidean => 1.0,
            ManifoldKind::Sphere => (r.sin().abs() / r).powi(exponent),
            ManifoldKind::Hyperbolic => (r.sinh() / r).powi(exponent),
        }
    }

    /// Ricci tensor in any orthonormal frame: `(n - 1) K I_n`.
    pub fn ricci_in_frame(&self, q: &Point) -> Result<DMatrix<f64>> {
        self.check(q)?;
        Ok(self.ricci())
    }

    pub(crate) fn ricci(&self) -> DMatrix<f64> {
        let scale = ((self.dim - 1) as i32 * self.curvature()) as f64;
        DMatrix::identity(self.dim, self.dim) * scale
    }

    /// Hyperboloid point to upper half-space coordinates (apex maps to `e_n`).
    pub fn to_half_space(&self, p: &Point) -> Result<Vec<f64>> {
        self.require_hyperbolic()?;
        self.check(p)?;
        let n = self.dim;
        let t = p.coords[n];
        let denom = t - p.coords[n - 1];
        let mut u: Vec<f64> = p.coords[..n - 1].iter().map(|y| y / denom).collect();
        u.push(1.0 / denom);
        Ok(u)
    }

    pub fn from_half_space(&self, u: &[f64]) -> Result<Point> {
        self.require_hyperbolic()?;
        let n = self.dim;
        if u.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: u.len(),
            });
        }
        let h = u[n - 1];
        if !(h > 0.0) {
            return Err(Error::InvalidPoint(format!(
                "half-space height must be positive, got {h}"
            )));
        }
        let s = dot(&u[..n - 1], &u[..n - 1]);
        let mut coords: Vec<f64> = u[..n - 1].iter().map(|x| x / h).collect();
        coords.push((h * h + s - 1.0) / (2.0 * h));
        coords.push((1.0 + h * h + s) / (2.0 * h));
        self.point(coords)
    }

    fn require_hyperbolic(&self) -> Result<()> {
        if self.kind != ManifoldKind::Hyperbolic {
            return Err(Error::Unsupported(
                "half-space coordinates exist only for hyperbolic space".into(),
            ));
        }
        Ok(())
    }
}

/// Gram-Schmidt completion of the ambient standard basis against `q`.
fn sphere_frame(q: &[f64]) -> Vec<Vec<f64>> {
    let m = q.len();
    let n = m - 1;
    // Some candidate always keeps a residual of at least 1/sqrt(m) while axes are missing.
    let threshold = 0.5 / (m as f64).sqrt();
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..m {
        if axes.len() == n {
            break;
        }
        let mut r = vec![0.0; m];
        r[j] = 1.0;
        for _ in 0..2 {
            let c = dot(&r, q);
            r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= c * qi);
            for axis in &axes {
                let c = dot(&r, axis);
                r.iter_mut().zip(axis).for_each(|(ri, ai)| *ri -= c * ai);
            }
        }
        let len = norm(&r);
        if len < threshold {
            continue;
        }
        r.iter_mut().for_each(|x| *x /= len);
        axes.push(r);
    }
    axes
}

impl Frame {
    /// Builds a frame from explicit axes, checking they are tangent and orthonormal.
    pub fn with_axes(manifold: Manifold, base: Point, axes: Vec<Vec<f64>>) -> Result<Self> {
        manifold.check(&base)?;
        if axes.len() != manifold.dim() {
            return Err(Error::DimensionMismatch {
                expected: manifold.dim(),
                got: axes.len(),
            });
        }
        let scale = match manifold.kind {
            ManifoldKind::Hyperbolic => base.coords[manifold.dim].powi(2),
            _ => 1.0,
        };
        let tol = 1e-12 * scale;
        for (i, a) in axes.iter().enumerate() {
            if a.len() != manifold.ambient_dim() {
                return Err(Error::DimensionMismatch {
                    expected: manifold.ambient_dim(),
                    got: a.len(),
                });
            }
            if manifold.kind != ManifoldKind::Euclidean
                && manifold.ambient_inner(a, &base.coords).abs() > tol
            {
                return Err(Error::InvalidParameter(format!(
                    "axis {i} is not tangent at the base point"
                )));
            }
            for (j, b) in axes.iter().enumerate().skip(i) {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (manifold.ambient_inner(a, b) - expected).abs() > tol {
                    return Err(Error::InvalidParameter(format!(
                        "axes {i} and {j} are not orthonormal"
                    )));
                }
            }
        }
        Ok(Self {
            manifold,
            base,
            axes,
        })
    }

    /// Frame with axes `x~_j = sum_k A_jk x_k`, so that coordinates transform as `v~ = A v`.
    pub fn rotated(&self, a: &DMatrix<f64>) -> Result<Self> {
        let n = self.manifold.dim();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.nrows(),
            });
        }
        let axes = (0..n)
            .map(|j| {
                let mut axis = vec![0.0; self.manifold.ambient_dim()];
                for (k, xk) in self.axes.iter().enumerate() {
                    axis.iter_mut()
                        .zip(xk)
                        .for_each(|(o, x)| *o += a[(j, k)] * x);
                }
                axis
            })
            .collect();
        Self::with_axes(self.manifold, self.base.clone(), axes)
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    fn check_len(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.manifold.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.manifold.dim(),
                got: coeffs.len(),
            });
        }
        Ok(())
    }

    pub fn to_ambient(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.manifold.ambient_dim()];
        for (c, axis) in coeffs.iter().zip(&self.axes) {
            out.iter_mut().zip(axis).for_each(|(o, a)| *o += c * a);
        }
        out
    }

    fn project(&self, p: &[f64]) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| self.manifold.ambient_inner(a, p))
            .collect()
    }

    /// Exponential map of frame coefficients.
    pub fn exp(&self, coeffs: &[f64]) -> Point {
        let r = norm(coeffs);
        if r == 0.0 {
            return self.base.clone();
        }
        let u = self.to_ambient(coeffs);
        let q = &self.base.coords;
        let (a, b) = match self.manifold.kind {
            ManifoldKind::Euclidean => (1.0, 1.0),
            ManifoldKind::Sphere => (r.cos(), r.sin() / r),
            ManifoldKind::Hyperbolic => (r.cosh(), r.sinh() / r),
        };
        let coords = q.iter().zip(&u).map(|(qi, ui)| a * qi + b * ui).collect();
        self.manifold.retract(coords)
    }

    /// Principal-leaf log-map in frame coefficients.
    pub fn log(&self, p: &Point) -> Result<Vec<f64>> {
        let q = &self.base.coords;
        match self.manifold.kind {
            ManifoldKind::Euclidean => {
                let diff: Vec<f64> = p.coords.iter().zip(q).map(|(a, b)| a - b).collect();
                Ok(self.project(&diff))
            }
            ManifoldKind::Sphere => {
                let c = dot(q, &p.coords);
                if c <= -1.0 + CUT_LOCUS_TOL {
                    return Err(Error::CutLocus);
                }
                let w = self.project(&p.coords);
                let wn = norm(&w);
                if wn == 0.0 {
                    return Ok(w);
                }
                let d = wn.atan2(c);
                Ok(w.into_iter().map(|x| x * d / wn).collect())
            }
            ManifoldKind::Hyperbolic => {
                let w = self.project(&p.coords);
                let wn = norm(&w);
                if wn == 0.0 {
                    return Ok(w);
                }
                let d = wn.asinh();
                Ok(w.into_iter().map(|x| x * d / wn).collect())
            }
        }
    }

    /// Leaves of the multi-valued log-map with norm at most `radius_cap`, by norm ascending.
    pub fn leaves(&self, p: &Point, radius_cap: f64) -> Result<Vec<Vec<f64>>> {
        let principal = self.log(p)?;
        let d = norm(&principal);
        if self.manifold.kind != ManifoldKind::Sphere {
            return Ok(if d <= radius_cap {
                vec![principal]
            } else {
                Vec::new()
            });
        }
        let dir: Vec<f64> = if d > 0.0 {
            principal.iter().map(|x| x / d).collect()
        } else {
            let mut e = vec![0.0; principal.len()];
            e[0] = 1.0;
            e
        };
        let scaled = |m: f64| dir.iter().map(|x| x * m).collect::<Vec<f64>>();
        let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
        if d <= radius_cap {
            out.push((d, principal));
        }
        for i in 1.. {
            let turn = 2.0 * PI * i as f64;
            let backward = turn - d;
            if backward > radius_cap {
                break;
            }
            out.push((backward, scaled(-backward)));
            let forward = turn + d;
            if forward <= radius_cap {
                out.push((forward, scaled(forward)));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(out.into_iter().map(|(_, v)| v).collect())
    }
}
