use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Hurst parameter {0} is outside the open interval (1/2, 1)")]
    HurstDomain(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("covariance matrix is not positive definite at grid index {index} (pivot {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("quadrature did not converge: estimate {estimate:e}, error estimate {error:e}, tolerance {tolerance:e}")]
    Quadrature {
        estimate: f64,
        error: f64,
        tolerance: f64,
    },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("particle {particle} exceeded |x| <= {bound:e} at t = {time} (state {state:e})")]
    Diverged {
        particle: usize,
        time: f64,
        state: f64,
        bound: f64,
    },

    #[error("CFL violation: drift magnitude {drift:e} gives Courant number {courant:.4} > 1")]
    Cfl { drift: f64, courant: f64 },

    #[error("tridiagonal solve failed at row {row} (pivot {pivot:e}); negative diffusion?")]
    Tridiagonal { row: usize, pivot: f64 },

    #[error(
        "coefficient fixed point did not converge after {sweeps} sweeps (last change {change:e})"
    )]
    FixedPoint { sweeps: usize, change: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
