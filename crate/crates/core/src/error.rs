use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("support length mismatch: {0} vs {1}")]
    SupportMismatch(usize, usize),
    #[error("operands carry different atom labels")]
    LabelMismatch,
    #[error("a measure must have at least one atom")]
    EmptySupport,
    #[error("negative weight {value:e} at atom {index}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("non-finite weight at atom {0}")]
    NonFiniteWeight(usize),
    #[error("duplicate atom label `{0}`")]
    DuplicateLabel(String),
    #[error("deletion factor {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("conditioning subset has zero mass")]
    ZeroMassSubset,
    #[error("atom {0} has zero mass inside the subset (infinite codelength)")]
    ZeroMassAtom(usize),
    #[error("atom index {index} out of range for support of size {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid of {cells} cells exceeds the {limit}-cell limit")]
    GridTooLarge { cells: usize, limit: usize },
    #[error("mean-value mismatch: max deviation {0:e}")]
    MeanMismatch(f64),
    #[error("input is not a probability distribution (mass {0})")]
    NotProbability(f64),
    #[error("tilt target {target} outside the attainable range")]
    TargetOutOfRange { target: f64 },
    #[error("constraint set infeasible: {0}")]
    Infeasible(String),
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("rank-deficient function family: {0}")]
    RankDeficient(String),
    #[error("hypothesis condition failed: {0}")]
    ConditionFailed(String),
    #[error("divergence generator rejected: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
