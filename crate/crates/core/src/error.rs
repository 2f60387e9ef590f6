use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("stepsize must be positive, got {0}")]
    NonPositiveStepsize(f64),
    #[error("linear system is singular or numerically ill-conditioned")]
    SingularSystem,
    #[error("matrix is not monotone: smallest symmetric-part eigenvalue {0:e}")]
    NotMonotone(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("invalid box: lower bound exceeds upper bound at coordinate {0}")]
    EmptyBox(usize),
    #[error("projection onto the requested set is unavailable: {0}")]
    UnsupportedSet(String),
    #[error("operator does not support this evaluation: {0}")]
    UnsupportedOperator(String),
    #[error("iterate norm {norm:e} exceeded the divergence guard at step {step}")]
    DivergenceDetected { step: usize, norm: f64 },
    #[error("point is not a fixed point of T_{gamma}: residual {residual:e}")]
    NotAFixedPoint { gamma: f64, residual: f64 },
    #[error("trace lacks block `{0}`")]
    MissingBlocks(String),
    #[error("trace lacks distances to the fixed-point set")]
    MissingDistances,
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("expected {expected} blocks, got {got}")]
    BadBlockCount { expected: usize, got: usize },
    #[error("fixed-point chain mismatch at block {block}: residual {residual:e}")]
    ChainMismatch { block: usize, residual: f64 },
    #[error("too few samples for a rate fit: {got} usable, need {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("fixed-point oracle did not converge: last residual {0:e}")]
    NoConvergence(f64),
    #[error("family does not certify a singleton fixed-point set")]
    NonSingletonFix,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
