use thiserror::Error;

/// Errors raised anywhere in the solver suite.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sampler: {0}")]
    InvalidSampler(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Lipschitz bound must be positive, got {0}")]
    NonPositiveL(f64),

    #[error("time-dependent residual requires delta_t")]
    MissingTimeStep,

    #[error("tau > 0 requires the field value u(x)")]
    MissingFieldValue,

    #[error("invalid scheme configuration: {0}")]
    InvalidScheme(String),

    #[error("interior batch is empty")]
    EmptyInteriorBatch,

    #[error("training diverged at iteration {iteration}: loss {loss:e} exceeds 1e6 x initial {initial:e}")]
    DivergenceDetected {
        iteration: usize,
        loss: f64,
        initial: f64,
    },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("stage {index} failed: {source}")]
    Stage {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("grid shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("grid too large for dense oracle: {0} interior nodes (cap 4096)")]
    GridTooLarge(usize),

    #[error("not converged after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("Riccati solution blows up before t = {0}")]
    BlowUp(f64),

    #[error("invalid parameter file: {0}")]
    InvalidThetaFile(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerics themselves (divergence,
    /// non-convergence, blow-up), as opposed to usage errors.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::DivergenceDetected { .. } | Error::NotConverged { .. } | Error::BlowUp(_) => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
