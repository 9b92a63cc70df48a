//! Exact sampling from centered distributions and the empirical covariance estimator.
//!
//! Every batch is driven by a ChaCha8 stream (`rand_chacha::ChaCha8Rng`)
//! seeded with `seed_from_u64(seed)`, so a `(distribution, seed, count)`
//! triple reproduces the same points on every platform.
//!
//! Isotropic distributions draw the tangent radius by inverting a tabulated
//! radial CDF and the direction uniformly on the unit sphere of the frame;
//! pushing `r u` through the exponential map folds the sample onto the
//! manifold automatically. Anisotropic sphere distributions propose from the
//! Euclidean kernel and accept with probability `theta(|v|) <= 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::covariance::factor_concentration;
use crate::distribution::CenteredDistribution;
use crate::error::{Error, Result};
use crate::manifold::{norm, Manifold, ManifoldKind, Point};
use crate::quadrature::{radial_breaks, truncation_radius, QuadratureSpec};

const INITIAL_KNOTS: usize = 1024;
const MAX_KNOTS: usize = 1 << 22;
/// Largest tolerated gap between the interpolated and the integrated CDF.
pub const CDF_DEFECT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub points: Vec<Point>,
    pub seed: u64,
    pub distribution_id: String,
    /// Proposals drawn; exceeds `points.len()` only for rejection sampling.
    pub proposals: u64,
}

/// Inverse-CDF table for a density on `[0, R]`, interpolated by cubic Hermite
/// segments that use the density itself as the slope.
#[derive(Clone, Debug)]
pub struct RadialTable {
    knots: Vec<f64>,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
}

// 10-point Gauss-Legendre on [-1, 1] for the per-interval CDF increments.
const GL_X: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_W: [f64; 5] = [
    0.295_524_224_714_752_87,
    0.269_266_719_309_996_35,
    0.219_086_362_515_982_04,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_14,
];

fn gauss10(g: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    GL_X.iter()
        .zip(&GL_W)
        .map(|(x, w)| w * (g(c - h * x) + g(c + h * x)))
        .sum::<f64>()
        * h
}

fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * d1
}

impl RadialTable {
    /// Tabulates `density` (unnormalized, nonnegative) over the segments between `breaks`.
    pub fn build(density: impl Fn(f64) -> f64, breaks: &[f64]) -> Result<Self> {
        let total_len = breaks.last().copied().unwrap_or(0.0) - breaks[0];
        if !(total_len > 0.0) {
            return Err(Error::InvalidParameter(
                "radial table needs a non-empty range".into(),
            ));
        }
        let mut knots_target = INITIAL_KNOTS;
        loop {
            let mut knots = vec![breaks[0]];
            for w in breaks.windows(2) {
                let count =
                    ((knots_target as f64 * (w[1] - w[0]) / total_len).ceil() as usize).max(2);
                let h = (w[1] - w[0]) / count as f64;
                knots.extend((1..=count).map(|i| {
                    if i == count {
                        w[1]
                    } else {
                        w[0] + h * i as f64
                    }
                }));
            }
            let pdf: Vec<f64> = knots.iter().map(|&r| density(r)).collect();
            let mut cdf = Vec::with_capacity(knots.len());
            cdf.push(0.0);
            let mut defect: f64 = 0.0;
            for i in 1..knots.len() {
                let (a, b) = (knots[i - 1], knots[i]);
                let mid = 0.5 * (a + b);
                let left = gauss10(&density, a, mid);
                let right = gauss10(&density, mid, b);
                let start = cdf[i - 1];
                let interp = hermite(start, start + left + right, pdf[i - 1], pdf[i], b - a, 0.5);
                defect = defect.max((interp - (start + left)).abs());
                cdf.push(start + left + right);
            }
            let total = *cdf.last().unwrap_or(&0.0);
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "radial density has mass {total}"
                )));
            }
            if defect / total < CDF_DEFECT_TOL {
                let cdf = cdf.into_iter().map(|c| c / total).collect();
                let pdf = pdf.into_iter().map(|p| p / total).collect();
                return Ok(Self { knots, cdf, pdf });
            }
            if knots_target >= MAX_KNOTS {
                return Err(Error::NoConvergence {
                    estimate: total,
                    error_bound: defect,
                });
            }
            knots_target *= 2;
        }
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Interpolated CDF at `r`.
    pub fn cdf(&self, r: f64) -> f64 {
        if r <= self.knots[0] {
            return 0.0;
        }
        if r >= *self.knots.last().unwrap() {
            return 1.0;
        }
        let i = self.knots.partition_point(|&k| k <= r) - 1;
        let h = self.knots[i + 1] - self.knots[i];
        hermite(
            self.cdf[i],
            self.cdf[i + 1],
            self.pdf[i],
            self.pdf[i + 1],
            h,
            (r - self.knots[i]) / h,
        )
    }

    /// Radius with interpolated CDF equal to `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let i = self
            .cdf
            .partition_point(|&c| c <= u)
            .clamp(1, self.cdf.len() - 1)
            - 1;
        let (a, b) = (self.knots[i], self.knots[i + 1]);
        let h = b - a;
        let eval = |s: f64| {
            hermite(
                self.cdf[i],
                self.cdf[i + 1],
                self.pdf[i],
                self.pdf[i + 1],
                h,
                s,
            ) - u
        };
        // Bisection on the segment, finished by a secant step.
        let (mut lo, mut hi) = (0.0, 1.0);
        let (mut flo, mut fhi) = (eval(lo), eval(hi));
        if flo >= 0.0 {
            return a;
        }
        if fhi <= 0.0 {
            return b;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let fm = eval(mid);
            if fm < 0.0 {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
                fhi = fm;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        let s = lo - flo * (hi - lo) / (fhi - flo);
        a + h * s.clamp(lo, hi)
    }
}

/// Prepared sampler; reuse it to draw many batches from one distribution.
#[derive(Clone, Debug)]
pub struct Sampler {
    dist: CenteredDistribution,
    table: RadialTable,
    /// `Some(S)` for rejection sampling of anisotropic sphere distributions.
    stretch: Option<nalgebra::DMatrix<f64>>,
}

impl Sampler {
    pub fn new(dist: &CenteredDistribution) -> Result<Self> {
        let manifold = dist.manifold();
        let n = manifold.dim();
        let profile = dist.profile();
        match dist.tensor().isotropic_value() {
            Some(lambda) => {
                let radius = truncation_radius(&manifold, profile, lambda, dist.quadrature());
                let breaks = radial_breaks(&manifold, radius);
                let density = |r: f64| {
                    profile.eval(lambda * r * r) * manifold.volume_density(r) * r.powi(n as i32 - 1)
                };
                let table = RadialTable::build(density, &breaks)?;
                Ok(Self {
                    dist: dist.clone(),
                    table,
                    stretch: None,
                })
            }
            None => {
                if manifold.kind() == ManifoldKind::Hyperbolic {
                    return Err(Error::Unsupported(
                        "anisotropic sampling on hyperbolic space".into(),
                    ));
                }
                let radius = profile.euclidean_radius(&QuadratureSpec::default());
                let density = |r: f64| profile.eval(r * r) * r.powi(n as i32 - 1);
                let table = RadialTable::build(density, &[0.0, radius])?;
                let s = factor_concentration(dist.tensor())?.s().clone();
                Ok(Self {
                    dist: dist.clone(),
                    table,
                    stretch: Some(s),
                })
            }
        }
    }

    pub fn table(&self) -> &RadialTable {
        &self.table
    }

    pub fn sample(&self, seed: u64, count: usize) -> SampleBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let manifold = self.dist.manifold();
        let frame = self.dist.frame();
        let n = manifold.dim();
        let mut points = Vec::with_capacity(count);
        let mut proposals = 0u64;
        while points.len() < count {
            proposals += 1;
            let dir = unit_direction(&mut rng, n);
            let r = self.table.quantile(rng.random::<f64>());
            let mut v: Vec<f64> = dir.iter().map(|d| d * r).collect();
            if let Some(s) = &self.stretch {
                v = (0..n)
                    .map(|i| (0..n).map(|j| s[(i, j)] * v[j]).sum())
                    .collect();
                let accept = manifold.volume_density(norm(&v));
                if rng.random::<f64>() >= accept {
                    continue;
                }
            }
            points.push(frame.exp(&v));
        }
        SampleBatch {
            points,
            seed,
            distribution_id: self.dist.id(),
            proposals,
        }
    }
}

fn unit_direction(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let len = norm(&g);
        if len > 1e-300 {
            return g.into_iter().map(|x| x / len).collect();
        }
    }
}

/// Draws `count` i.i.d. points from `dist`.
pub fn sample(dist: &CenteredDistribution, seed: u64, count: usize) -> Result<SampleBatch> {
    if count == 0 {
        return Ok(SampleBatch {
            points: Vec::new(),
            seed,
            distribution_id: dist.id(),
            proposals: 0,
        });
    }
    Ok(Sampler::new(dist)?.sample(seed, count))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCovariance {
    pub sigma_hat_matrix: nalgebra::DMatrix<f64>,
    /// `tr(sigma_hat_matrix) / n`.
    pub sigma_hat_sq: f64,
    pub n_samples: usize,
    /// Standard error of `sigma_hat_sq`.
    pub std_error: f64,
}

/// `(1/N) sum v_i v_i'` over principal-leaf log-maps at `q`.
pub fn empirical_covariance(
    manifold: &Manifold,
    q: &Point,
    batch: &SampleBatch,
) -> Result<EmpiricalCovariance> {
    let frame = manifold.frame_at(q)?;
    let n = manifold.dim();
    let count = batch.points.len();
    let mut sum = nalgebra::DMatrix::zeros(n, n);
    let mut per_axis = Vec::with_capacity(count);
    for (index, p) in batch.points.iter().enumerate() {
        let v = match frame.log(p) {
            Ok(v) => v,
            Err(Error::CutLocus) => return Err(Error::CutLocusSample { index }),
            Err(e) => return Err(e),
        };
        for i in 0..n {
            for j in 0..n {
                sum[(i, j)] += v[i] * v[j];
            }
        }
        per_axis.push(v.iter().map(|x| x * x).sum::<f64>() / n as f64);
    }
    if count == 0 {
        return Ok(EmpiricalCovariance {
            sigma_hat_matrix: sum,
            sigma_hat_sq: 0.0,
            n_samples: 0,
            std_error: 0.0,
        });
    }
    let sigma_hat_matrix = sum / count as f64;
    let sigma_hat_sq = sigma_hat_matrix.trace() / n as f64;
    let std_error = if count > 1 {
        let mean = per_axis.iter().sum::<f64>() / count as f64;
        let var = per_axis.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
        (var / count as f64).sqrt()
    } else {
        0.0
    };
    Ok(EmpiricalCovariance {
        sigma_hat_matrix,
        sigma_hat_sq,
        n_samples: count,
        std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn table_reproduces_exponential_cdf() {
        let t = RadialTable::build(|r| (-r).exp(), &[0.0, 40.0]).unwrap();
        let norm = 1.0 - (-40f64).exp();
        for r in [0.1, 0.7, 2.0, 5.0] {
            assert!((t.cdf(r) - (1.0 - (-r).exp()) / norm).abs() < 1e-9);
        }
        for u in [0.01, 0.5, 0.99] {
            let r = t.quantile(u);
            assert!((t.cdf(r) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_covariance_hand_examples() {
        let s = Manifold::sphere(2).unwrap();
        let q = s.point(vec![0.0, 0.0, 1.0]).unwrap();
        let batch = |points| SampleBatch {
            points,
            seed: 0,
            distribution_id: String::new(),
            proposals: 0,
        };
        let e = empirical_covariance(&s, &q, &batch(vec![q.clone(); 3])).unwrap();
        assert_eq!(e.sigma_hat_matrix, nalgebra::DMatrix::zeros(2, 2));

        let plus = s.point(vec![1.0, 0.0, 0.0]).unwrap();
        let minus = s.point(vec![-1.0, 0.0, 0.0]).unwrap();
        let e = empirical_covariance(&s, &q, &batch(vec![plus, minus])).unwrap();
        assert!((e.sigma_hat_matrix[(0, 0)] - PI * PI / 4.0).abs() < 1e-14);
        assert!(
            e.sigma_hat_matrix[(1, 1)].abs() < 1e-30 && e.sigma_hat_matrix[(0, 1)].abs() < 1e-30
        );
        assert!((e.sigma_hat_sq - PI * PI / 8.0).abs() < 1e-14);

        let anti = s.point(vec![0.0, 0.0, -1.0]).unwrap();
        let r = empirical_covariance(&s, &q, &batch(vec![q.clone(), anti]));
        assert!(matches!(r, Err(Error::CutLocusSample { index: 1 })));
    }
}
