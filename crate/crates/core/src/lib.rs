//! Centered probability distributions on complete manifolds of constant curvature.
//!
//! The crate covers the Euclidean plane, spheres and hyperbolic spaces with
//! exponential/log maps in orthonormal frames ([`manifold`]), a radial
//! quadrature oracle ([`quadrature`]), folded densities built from radial
//! kernels ([`profile`], [`distribution`]), closed-form covariance
//! approximations ([`covariance`], [`calibration`]), exact samplers
//! ([`sampling`]) and the sigma sweeps behind the `manifold-stats` binary
//! ([`sweep`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod covariance;
pub mod distribution;
pub mod error;
pub mod manifold;
pub mod profile;
pub mod quadrature;
pub mod sampling;
pub mod sweep;

pub use covariance::{
    approx_constants, constant_curvature_prediction, factor_concentration, invariant_ratio,
    normal_approx_cov, profile_moments, ApproxOrder, CovarianceResult, MomentSet, Prediction,
    SqrtFactor,
};
pub use distribution::{
    build_distribution, CenteredDistribution, ConcentrationTensor, DEFAULT_FOLD_TOL,
};
pub use error::{Error, Result};
pub use manifold::{Frame, Manifold, ManifoldKind, Point, TangentVector};
pub use profile::{ProfileKind, RadialProfile};
pub use quadrature::{
    exact_moments, gaussian_moments, ExactMoments, GaussianMoments, QuadratureSpec,
};
pub use sampling::{empirical_covariance, sample, EmpiricalCovariance, SampleBatch, Sampler};
pub use sweep::{run_sweep, SweepConfig, SweepManifold, SweepRow};
