use thiserror::Error;

/// Errors raised by the learning library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid label {0}: expected -1 or +1")]
    InvalidLabel(i64),

    #[error("non-finite value {value} at feature index {index}")]
    NonFiniteValue { index: u32, value: f64 },

    #[error("feature indices not strictly increasing at position {0}")]
    UnsortedIndices(usize),

    #[error("invalid kernel parameter: {0}")]
    InvalidKernel(String),

    #[error("coefficient must be nonzero and finite, got {0}")]
    InvalidCoefficient(f64),

    #[error("cannot rescale a zero hypothesis onto a sphere of radius {0}")]
    DegenerateProjection(f64),

    #[error("gram matrix corrupted: quadratic form {0} is negative")]
    GramCorruption(f64),

    #[error("factorization failed: non-positive pivot {pivot} at row {row}")]
    FactorizationFailure { row: usize, pivot: f64 },

    #[error("solver diverged: factorization failed after {0} regularizer doublings")]
    SolverDiverged(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("round {round}: {source}")]
    Round { round: usize, source: Box<Error> },

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("more than two distinct labels: {0:?}")]
    NonBinaryLabels(Vec<String>),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("sample size {requested} exceeds dataset size {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
