use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("class {class} retains only {kept} rows after trimming")]
    ClassCollapsed { class: usize, kept: usize },
    #[error("infeasible problem: {0}")]
    Infeasible(String),
    #[error("regression design is rank deficient")]
    RankDeficient,
    #[error("response has zero variance on the kept rows")]
    ZeroVariance,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("every candidate failed: {0}")]
    AllCandidatesFailed(String),
}
