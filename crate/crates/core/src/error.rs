use thiserror::Error;

/// Errors raised by the discretization, solvers and reconstruction drivers.
///
/// Conditions that are reported but not fatal (rank deficiency, flat obstacle
/// misfit, ill-conditioned Gram matrices) are carried as flags on the
/// corresponding reports instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("obstacle too close to the outer boundary: clearance {clearance:.4} < required {required:.4}")]
    ObstacleTooClose { clearance: f64, required: f64 },

    #[error("boundary patch `{0}` contains no boundary nodes")]
    EmptyPatch(&'static str),

    #[error("field length {got} does not match domain size {expected}")]
    DomainMismatch { expected: usize, got: usize },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular system: zero pivot at row {0}")]
    SingularSystem(usize),

    #[error("newton iteration diverged after {iterations} steps (residual {residual:.3e}); boundary data is outside the small-data regime")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("zero frequency vector")]
    ZeroFrequency,

    #[error("frequency {distance:.3e} away from 2ia·e1, outside the splitting neighbourhood of radius {radius:.3e}")]
    OutsideNeighborhood { distance: f64, radius: f64 },

    #[error("exponential overflow guard violated: max |e^(-ix·ζ/h)| = {0:.3e}")]
    Overflow(f64),

    #[error("richardson levels disagree: error estimate {estimate:.3e} exceeds {limit:.3e}")]
    StencilInconsistent { estimate: f64, limit: f64 },

    #[error("test function trace leaks outside the measurement patch (max {0:.3e})")]
    SupportViolation(f64),

    #[error("linearization order {0} not supported (1..=5)")]
    UnsupportedOrder(usize),

    #[error("not enough moments: {got} provided, {needed} required")]
    TooFewMoments { got: usize, needed: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
