use thiserror::Error;

/// Errors surfaced by the verification engine.
///
/// `DivisionByZero` and `DegenerateParam` are recoverable by resampling the
/// parameter point; everything else indicates a genuine structural failure
/// (or a bug) and aborts the check that raised it.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("division by zero at the sampled parameter point ({0}); resample")]
    DivisionByZero(String),
    #[error("degenerate parameter point: {0}")]
    DegenerateParam(String),
    #[error("singular matrix: {0}")]
    SingularMatrix(String),
    #[error("higher-order pole survived assembly at w = {0}")]
    HigherOrderPole(String),
    #[error("evaluation point hits a pole: {0}")]
    DeltaPole(String),
    #[error("delta support mismatch: {0}")]
    MismatchedSupport(String),
    #[error("weight mismatch: {0}")]
    WeightMismatch(String),
    #[error("unpaired delta term: {0}")]
    UnpairedDelta(String),
    #[error("operator payload mismatch: {0}")]
    ExponentMismatch(String),
    #[error("series mismatch: {0}")]
    SeriesMismatch(String),
    #[error("no valid mode index k for the recursion certificate: {0}")]
    NoValidK(String),
    #[error("numeric limit did not converge: {0}")]
    ConvergenceFailure(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("truncation window too small: {0}")]
    WindowTooSmall(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EngineError>;
