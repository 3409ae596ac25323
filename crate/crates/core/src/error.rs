use thiserror::Error;

/// Errors raised by the geometry engine and the verification drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("dimension {0} outside the supported range 1..={max}", max = crate::tensor::MAX_DIM)]
    DimensionOutOfRange(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("component array has length {found}, expected {expected}")]
    ComponentLength { expected: usize, found: usize },
    #[error("slot {slot} out of range for a rank-{rank} tensor")]
    SlotOutOfRange { slot: usize, rank: usize },
    #[error("cannot contract a slot with itself")]
    SameSlot,
    #[error("contracting two slots of equal variance needs a metric of variance {0}")]
    MissingMetric(&'static str),
    #[error("invalid variance: {0}")]
    Variance(String),
    #[error("tensor is not alternating: {0}")]
    NotAlternating(String),
    #[error("zero orientation form")]
    ZeroOrientation,
    #[error("odd dimension {0}")]
    OddDimension(usize),
    #[error("singular metric (|det g| = {0:e})")]
    SingularMetric(f64),
    #[error("invalid fibre metric: {0}")]
    FibreMetric(String),
    #[error("invalid Roter spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("jet of order {have} supplied where order {need} is required")]
    MissingDerivatives { have: u8, need: u8 },
    #[error("dimension n = {0} is below 4")]
    DimensionTooSmall(usize),
    #[error("operator {index} is not skew-adjoint (residual {residual:e})")]
    NotSkew { index: usize, residual: f64 },
    #[error("vectors are linearly dependent (|det| = {0:e})")]
    DependentVectors(f64),
    #[error("distribution has dimension {0}, expected 1")]
    DistributionDimension(usize),
    #[error("failed invariant: {0}")]
    FailedInvariant(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("time {t} outside sampled span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, GeomError>;
