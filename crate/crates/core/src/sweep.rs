//! Sigma sweeps comparing predictions, the quadrature oracle and Monte Carlo estimates.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use crate::calibration::{C4Candidate, FITTED_C4_N2};
use crate::covariance::{constant_curvature_prediction, ApproxOrder};
use crate::distribution::{build_distribution, ConcentrationTensor, DEFAULT_FOLD_TOL};
use crate::error::{Error, Result};
use crate::manifold::Manifold;
use crate::profile::RadialProfile;
use crate::quadrature::{exact_moments, QuadratureSpec};
use crate::sampling::{empirical_covariance, Sampler};

pub const CSV_HEADER: &str = "sigma,predicted_second,predicted_fourth,exact_quadrature,sigma_hat_mean,sigma_hat_se,n_samples,seed";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepManifold {
    Sphere2,
    Hyperbolic2,
    Euclidean2,
}

impl SweepManifold {
    pub fn manifold(self) -> Manifold {
        match self {
            SweepManifold::Sphere2 => Manifold::sphere(2),
            SweepManifold::Hyperbolic2 => Manifold::hyperbolic(2),
            SweepManifold::Euclidean2 => Manifold::euclidean(2),
        }
        .expect("dimension 2 is valid")
    }

    /// Sample count used when none is given.
    pub fn default_samples(self) -> usize {
        match self {
            SweepManifold::Hyperbolic2 => 200,
            _ => 150,
        }
    }
}

impl FromStr for SweepManifold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere2" => Ok(SweepManifold::Sphere2),
            "hyperbolic2" => Ok(SweepManifold::Hyperbolic2),
            "euclidean2" => Ok(SweepManifold::Euclidean2),
            _ => Err(Error::Parse(format!("unknown sweep manifold {s}"))),
        }
    }
}

/// Where the `sigma^4` numerator coefficient comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum C4Source {
    /// The `(n^2 + 3n + 11) / 120` form (7/40 at `n = 2`).
    Legacy,
    /// The value selected by the quadrature fit.
    Fitted(f64),
}

impl C4Source {
    pub fn fitted_default() -> Self {
        C4Source::Fitted(FITTED_C4_N2)
    }

    pub fn value(self, n: usize) -> f64 {
        match self {
            C4Source::Legacy => C4Candidate::Legacy.value(n),
            C4Source::Fitted(c) => c,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub manifold: SweepManifold,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub points: usize,
    pub samples_per_sigma: usize,
    pub base_seed: u64,
    /// Order whose prediction is summarized against the oracle.
    pub order: ApproxOrder,
    pub c4_source: C4Source,
    pub out_path: Option<PathBuf>,
}

impl SweepConfig {
    pub fn new(manifold: SweepManifold) -> Self {
        Self {
            manifold,
            sigma_max: 1.0,
            sigma_min: 0.01,
            points: 50,
            samples_per_sigma: manifold.default_samples(),
            base_seed: 42,
            order: ApproxOrder::Fourth,
            c4_source: C4Source::fitted_default(),
            out_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max && self.sigma_max.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "need 0 < sigma_min < sigma_max, got {} and {}",
                self.sigma_min, self.sigma_max
            )));
        }
        if self.points < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 grid points, got {}",
                self.points
            )));
        }
        if self.samples_per_sigma < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 samples, got {}",
                self.samples_per_sigma
            )));
        }
        if self.order == ApproxOrder::Exact {
            return Err(Error::InvalidParameter(
                "sweep order must be second or fourth".into(),
            ));
        }
        Ok(())
    }

    /// Log-spaced grid from `sigma_max` down to `sigma_min`.
    pub fn grid(&self) -> Vec<f64> {
        let (hi, lo) = (self.sigma_max.ln(), self.sigma_min.ln());
        let last = self.points - 1;
        (0..self.points)
            .map(|i| match i {
                0 => self.sigma_max,
                i if i == last => self.sigma_min,
                i => (hi + (lo - hi) * i as f64 / last as f64).exp(),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub sigma: f64,
    pub predicted_second: f64,
    pub predicted_fourth: f64,
    pub exact_quadrature: f64,
    pub sigma_hat_mean: f64,
    pub sigma_hat_se: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl SweepRow {
    /// The prediction of the requested order.
    pub fn predicted(&self, order: ApproxOrder) -> f64 {
        match order {
            ApproxOrder::Second => self.predicted_second,
            _ => self.predicted_fourth,
        }
    }

    /// Whether the estimate lies within `k` standard errors of the oracle value.
    pub fn covered(&self, k: f64) -> bool {
        (self.sigma_hat_mean - self.exact_quadrature).abs() <= k * self.sigma_hat_se
    }

    fn check(&self) -> Result<()> {
        let vars = [
            self.predicted_second,
            self.predicted_fourth,
            self.exact_quadrature,
            self.sigma_hat_mean,
        ];
        if vars.iter().any(|v| !(*v >= 0.0)) || !(self.sigma_hat_se >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "negative variance in row sigma={}",
                self.sigma
            )));
        }
        let lo = self.predicted_second.min(self.predicted_fourth);
        let hi = self.predicted_second.max(self.predicted_fourth);
        let bracketed = (lo..=hi).contains(&self.exact_quadrature);
        let close =
            (self.exact_quadrature - self.predicted_fourth).abs() <= 5.0 * self.sigma.powi(6);
        if !(bracketed || close) {
            return Err(Error::ApproximationOutOfRange(
                self.exact_quadrature - self.predicted_fourth,
            ));
        }
        Ok(())
    }
}

fn sweep_row(manifold: &Manifold, cfg: &SweepConfig, index: usize, sigma: f64) -> Result<SweepRow> {
    let n = manifold.dim();
    let curvature = manifold.curvature();
    let c4 = cfg.c4_source.value(n);
    let predicted_second =
        constant_curvature_prediction(curvature, n, sigma, ApproxOrder::Second, c4)?.sigma_axis;
    let predicted_fourth =
        constant_curvature_prediction(curvature, n, sigma, ApproxOrder::Fourth, c4)?.sigma_axis;
    let profile = RadialProfile::normal(n)?;
    let lambda = 1.0 / (sigma * sigma);
    let exact_quadrature =
        exact_moments(manifold, &profile, lambda, &QuadratureSpec::default())?.sigma_axis;

    let q = manifold.origin();
    let dist = build_distribution(
        manifold,
        &q,
        ConcentrationTensor::from_sigma(n, sigma)?,
        profile,
        DEFAULT_FOLD_TOL,
    )?;
    let seed = cfg.base_seed.wrapping_add(index as u64);
    let batch = Sampler::new(&dist)?.sample(seed, cfg.samples_per_sigma);
    let est = empirical_covariance(manifold, &q, &batch)?;
    let row = SweepRow {
        sigma,
        predicted_second,
        predicted_fourth,
        exact_quadrature,
        sigma_hat_mean: est.sigma_hat_sq,
        sigma_hat_se: est.std_error,
        n_samples: est.n_samples,
        seed,
    };
    row.check()?;
    Ok(row)
}

/// Runs the sweep; rows may be computed in parallel but come back in grid order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let manifold = cfg.manifold.manifold();
    let grid = cfg.grid();
    let rows = grid
        .par_iter()
        .enumerate()
        .map(|(i, &sigma)| sweep_row(&manifold, cfg, i, sigma))
        .collect::<Result<Vec<_>>>()?;
    if let Some(path) = &cfg.out_path {
        write_csv(path, &rows)?;
    }
    Ok(rows)
}

/// `%.9g`-style formatting: 9 significant digits, no trailing zeros, `.` separator.
pub fn format_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = format!("{:.8e}", x);
    let (mantissa, e) = exp.split_once('e').expect("exponent present");
    let e: i32 = e.parse().expect("integer exponent");
    if (-4..9).contains(&e) {
        let decimals = (8 - e).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        let m = trim_zeros(mantissa.to_string());
        format!("{m}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn render_csv(rows: &[SweepRow]) -> String {
    let mut out = String::with_capacity(96 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            format_g9(r.sigma),
            format_g9(r.predicted_second),
            format_g9(r.predicted_fourth),
            format_g9(r.exact_quadrature),
            format_g9(r.sigma_hat_mean),
            format_g9(r.sigma_hat_se),
            r.n_samples,
            r.seed
        );
    }
    out
}

pub fn write_csv(path: &std::path::Path, rows: &[SweepRow]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(render_csv(rows).as_bytes())?;
    file.flush()?;
    Ok(())
}
