use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not positive definite (pivot {pivot} is {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("class has no samples")]
    EmptyClass,
    #[error("batch has no samples")]
    EmptyBatch,
    #[error("reference determinant set is empty")]
    EmptyReferenceSet,
    #[error("ELBO became non-finite at step {step}; the learning rate is too large for the data scale")]
    NonFiniteLoss { step: usize },
    #[error("need at least {k} points for {k} clusters, got {points}")]
    TooFewPoints { points: usize, k: usize },
    #[error("clustering needs at least two non-empty clusters")]
    DegenerateClustering,
    #[error("invalid target dimension {requested} (allowed 1..={max})")]
    InvalidTargetDim { requested: usize, max: usize },
    #[error("model store has no classes")]
    EmptyModel,
    #[error("missing labels: {0}")]
    MissingLabels(&'static str),
    #[error("non-finite cost at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("list is empty")]
    EmptyList,
    #[error("non-finite feature at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("invalid label {label} at row {row}")]
    InvalidLabel { row: usize, label: i32 },
    #[error("invalid k range [{k_min}, {k_max}] for {points} points")]
    InvalidKRange { k_min: usize, k_max: usize, points: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}
