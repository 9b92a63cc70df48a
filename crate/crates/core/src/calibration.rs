//! Fitting the `sigma^4` numerator coefficient of the fourth-order prediction.
//!
//! Two closed forms compete for this coefficient at `n = 2`: `7/40` from the
//! `n^2 + 3n + 11` fourth-moment expression, and `1/5` from the Isserlis
//! contraction `(n+2)(n+4)`. The quadrature oracle settles it: for each `sigma`
//! on a grid, the exact per-axis variance is multiplied by the fourth-order
//! denominator and the known low-order numerator terms are removed, leaving a
//! residual that is regressed on `sigma^4` through the origin.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::manifold::Manifold;
use crate::profile::RadialProfile;
use crate::quadrature::{
    exact_moments, fourth_moment_coefficient, legacy_fourth_moment_coefficient, QuadratureSpec,
};

/// The coefficient the fit selects at `n = 2` (the Isserlis value, 24/120).
pub const FITTED_C4_N2: f64 = 0.2;

/// Distance within which a fitted value is said to match a candidate.
pub const C4_MATCH_TOL: f64 = 0.005;

pub const DEFAULT_CONSTANTS_FILE: &str = "manifold_stats_constants.txt";

/// Grid used for the fit: 26 equally spaced values of sigma in `[0.05, 0.3]`.
pub fn default_fit_grid() -> Vec<f64> {
    (0..26).map(|i| 0.05 + 0.01 * i as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum C4Candidate {
    Legacy,
    Isserlis,
}

impl C4Candidate {
    pub fn name(self) -> &'static str {
        match self {
            C4Candidate::Legacy => "legacy",
            C4Candidate::Isserlis => "isserlis",
        }
    }

    pub fn value(self, n: usize) -> f64 {
        match self {
            C4Candidate::Legacy => legacy_fourth_moment_coefficient(n) / 120.0,
            C4Candidate::Isserlis => fourth_moment_coefficient(n) / 120.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct C4Fit {
    pub curvature: i32,
    pub n: usize,
    pub fitted: f64,
    /// `(sigma, residual of the fitted model)` per grid point.
    pub residuals: Vec<(f64, f64)>,
    pub winner: C4Candidate,
}

impl C4Fit {
    pub fn residual_rms(&self) -> f64 {
        let m = self.residuals.len().max(1) as f64;
        (self.residuals.iter().map(|(_, r)| r * r).sum::<f64>() / m).sqrt()
    }

    pub fn residual_max(&self) -> f64 {
        self.residuals
            .iter()
            .map(|(_, r)| r.abs())
            .fold(0.0, f64::max)
    }

    pub fn distance_to(&self, candidate: C4Candidate) -> f64 {
        (self.fitted - candidate.value(self.n)).abs()
    }

    /// Whether the winner lies within [`C4_MATCH_TOL`] of the fitted value.
    pub fn matches_winner(&self) -> bool {
        self.distance_to(self.winner) <= C4_MATCH_TOL
    }
}

/// Least-squares fit of the `sigma^4` numerator coefficient against the oracle.
pub fn fit_c4(curvature: i32, n: usize, sigmas: &[f64]) -> Result<C4Fit> {
    let manifold = match curvature {
        1 => Manifold::sphere(n)?,
        -1 => Manifold::hyperbolic(n)?,
        _ => {
            return Err(Error::InvalidParameter(format!(
                "c4 fit needs curvature +1 or -1, got {curvature}"
            )))
        }
    };
    if sigmas.is_empty() {
        return Err(Error::InvalidParameter("empty sigma grid".into()));
    }
    let profile = RadialProfile::normal(n)?;
    let spec = QuadratureSpec::default()
        .with_rel_tol(1e-13)
        .with_abs_tol(1e-300);
    let kappa = curvature as f64;
    let nf = n as f64;
    let mut points = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let s2 = sigma * sigma;
        let exact = exact_moments(&manifold, &profile, 1.0 / s2, &spec)?.sigma_axis;
        let denom = 1.0 - kappa * nf / 6.0 * s2 + nf * (nf + 2.0) / 120.0 * s2 * s2;
        let low_order = 1.0 - kappa * (nf + 2.0) / 6.0 * s2;
        points.push((sigma, s2 * s2, exact / s2 * denom - low_order));
    }
    let sxy: f64 = points.iter().map(|(_, x, y)| x * y).sum();
    let sxx: f64 = points.iter().map(|(_, x, _)| x * x).sum();
    let fitted = sxy / sxx;
    let residuals = points
        .iter()
        .map(|&(sigma, x, y)| (sigma, y - fitted * x))
        .collect();
    let winner = [C4Candidate::Legacy, C4Candidate::Isserlis]
        .into_iter()
        .min_by(|a, b| {
            (fitted - a.value(n))
                .abs()
                .total_cmp(&(fitted - b.value(n)).abs())
        })
        .unwrap_or(C4Candidate::Isserlis);
    Ok(C4Fit {
        curvature,
        n,
        fitted,
        residuals,
        winner,
    })
}

/// Result of the adjudication as stored in the constants file.
#[derive(Clone, Debug, PartialEq)]
pub struct C4Constants {
    pub values: BTreeMap<String, String>,
}

impl C4Constants {
    /// Coefficient to use for `c4_source = fitted`.
    pub fn c4(&self) -> Result<f64> {
        self.get_f64("c4_value")
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let raw = self
            .values
            .get(key)
            .ok_or_else(|| Error::Parse(format!("missing key {key}")))?;
        raw.parse()
            .map_err(|_| Error::Parse(format!("{key} = {raw} is not a number")))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected key = value", lineno + 1))
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Renders the constants file for a sphere and a hyperbolic fit.
pub fn render_constants(sphere: &C4Fit, hyperbolic: &C4Fit) -> String {
    let n = sphere.n;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# sigma^4 numerator coefficient c4 of the fourth-order per-axis variance prediction"
    );
    let _ = writeln!(out, "# generated by `manifold-stats calibrate`");
    let _ = writeln!(
        out,
        "# oracle: adaptive Gauss-Kronrod radial quadrature of the standard normal, n = {n}"
    );
    let _ = writeln!(
        out,
        "# model: exact/sigma^2 * (1 - k n/6 s^2 + n(n+2)/120 s^4) - (1 - k (n+2)/6 s^2) = c4 s^4, s = sigma"
    );
    let _ = writeln!(
        out,
        "# grid: {} points, sigma in [{}, {}]",
        sphere.residuals.len(),
        first(sphere),
        last(sphere)
    );
    let _ = writeln!(
        out,
        "# candidate legacy = {} ((n^2+3n+11)/120)",
        C4Candidate::Legacy.value(n)
    );
    let _ = writeln!(
        out,
        "# candidate isserlis = {} ((n+2)(n+4)/120)",
        C4Candidate::Isserlis.value(n)
    );
    for (label, fit) in [("sphere", sphere), ("hyperbolic", hyperbolic)] {
        for (sigma, r) in &fit.residuals {
            let _ = writeln!(out, "# residual {label} sigma={sigma:.2} {r:.6e}");
        }
    }
    let _ = writeln!(out, "n = {n}");
    for (label, fit) in [("sphere", sphere), ("hyperbolic", hyperbolic)] {
        let _ = writeln!(out, "c4_fitted_{label} = {:.9}", fit.fitted);
        let _ = writeln!(out, "c4_winner_{label} = {}", fit.winner.name());
        let _ = writeln!(out, "residual_rms_{label} = {:.6e}", fit.residual_rms());
        let _ = writeln!(out, "residual_max_{label} = {:.6e}", fit.residual_max());
    }
    let winner = if sphere.winner == hyperbolic.winner {
        sphere.winner.name()
    } else {
        "inconsistent"
    };
    let _ = writeln!(out, "c4_winner = {winner}");
    let _ = writeln!(out, "c4_value = {}", sphere.winner.value(n));
    out
}

fn first(fit: &C4Fit) -> f64 {
    fit.residuals.first().map_or(f64::NAN, |r| r.0)
}

fn last(fit: &C4Fit) -> f64 {
    fit.residuals.last().map_or(f64::NAN, |r| r.0)
}

/// Runs both fits on the default grid and writes the constants file.
pub fn calibrate(path: &Path) -> Result<(C4Fit, C4Fit)> {
    let grid = default_fit_grid();
    let sphere = fit_c4(1, 2, &grid)?;
    let hyperbolic = fit_c4(-1, 2, &grid)?;
    std::fs::write(path, render_constants(&sphere, &hyperbolic))?;
    Ok((sphere, hyperbolic))
}
