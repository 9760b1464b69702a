use thiserror::Error;

/// Errors surfaced by model construction, grid inversion and Monte Carlo drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {0} not implemented (supported: 2, 3)")]
    UnsupportedDimension(usize),

    #[error("invalid spectral measure: {0}")]
    InvalidMeasure(String),

    #[error("degenerate spectral measure: min Phi = {min_value:.3e} at direction {direction:?}")]
    Degenerate { min_value: f64, direction: Vec<f64> },

    #[error("grid too coarse / too small: {0}")]
    GridResolution(String),

    #[error("evaluation at the on-diagonal singularity (x = 0)")]
    Singularity,

    #[error("spectral measure has no Lebesgue density (atomic variant is oracle-only)")]
    NoDensity,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("step budget exhausted after {steps} steps (distance to boundary {dist:.3e})")]
    StepBudget { steps: u64, dist: f64 },

    #[error("Monte Carlo budget exhausted: {0}")]
    McBudget(String),

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("oscillation for the exponent fit is below the noise floor: {0}")]
    NoiseFloor(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("corrupt grid cache: {0}")]
    BadCache(String),
}

pub type Result<T> = std::result::Result<T, Error>;
