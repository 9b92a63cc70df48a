use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The log-map direction is undefined (sphere antipode).
    #[error("point lies on the cut locus of the base point")]
    CutLocus,

    #[error("sample {index} lies on the cut locus of the center")]
    CutLocusSample { index: usize },

    #[error("concentration tensor is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge: estimate {estimate:e}, error bound {error_bound:e}")]
    NoConvergence { estimate: f64, error_bound: f64 },

    #[error("kernel is not normalized: integral over R^n is {0}")]
    NotNormalized(f64),

    #[error("kernel fourth moment diverges")]
    DivergentMoment,

    /// `1 - tr(RC)/6` is not positive, the expansion does not apply.
    #[error("approximation out of range: 1 - tr(RC)/6 = {0}")]
    ApproximationOutOfRange(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed constants file: {0}")]
    Parse(String),
}
