use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("pair `{0}` has more than one unit at position {1}")]
    DuplicateUnit(String, u8),
    #[error("pair `{0}` is missing the unit at position {1}")]
    IncompletePair(String, u8),
    #[error("both units of pair `{0}` are treated")]
    BothTreated(String),
    #[error("neither unit of pair `{0}` is treated")]
    NeitherTreated(String),
    #[error("invalid position {position} for pair `{pair}` (expected 1 or 2)")]
    InvalidPosition { pair: String, position: u8 },
    #[error("observed time {0} is negative or not finite")]
    NegativeTime(f64),
    #[error("empty input")]
    EmptyInput,
    #[error("leave-one-out risk set is empty at an event time")]
    DegenerateRiskSet,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid sensitivity parameter {0} (must be >= 1 and finite)")]
    InvalidGamma(f64),
    #[error("{nonzero} informative pairs exceed the exact enumeration cap of {cap}")]
    TooManyPairs { nonzero: usize, cap: usize },
    #[error("analysis times must be finite, positive and strictly increasing")]
    InvalidGrid,
    #[error("column {0} has zero variance")]
    DegenerateColumn(usize),
    #[error("matrix is not a valid correlation matrix: {0}")]
    NotACorrelationMatrix(String),
    #[error("dimension {0} exceeds the supported maximum of {1}")]
    DimensionTooLarge(usize, usize),
    #[error("grid has {0} points; closed testing supports at most {1}")]
    GridTooLarge(usize, usize),
    #[error("no informative pairs (E|d| = 0) in column {0}")]
    NoInformation(usize),
    #[error("target censoring rate {target} is not bracketed by [{low}, {high}]")]
    TargetUnreachable { target: f64, low: f64, high: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
