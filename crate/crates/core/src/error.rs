use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariate `{0}` is constant and cannot be standardized")]
    ConstantCovariate(String),

    #[error("feature `{0}` has no nonzero counts")]
    AllZeroFeature(String),

    #[error("sample `{0}` has no nonzero counts")]
    EmptySample(String),

    #[error("samples `{0}` and `{1}` share no feature with nonzero counts in both")]
    NoSharedFeatures(String, String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter invariant violated: {0}")]
    Invariant(String),

    #[error("zero-inflation indicator set for sample {sample} with nonzero count")]
    InconsistentZeroIndicator { sample: usize },

    #[error("non-finite log-likelihood at iteration {iteration} (feature index {feature})")]
    NumericalFailure { iteration: usize, feature: usize },

    #[error("trace is empty")]
    EmptyTrace,

    #[error("covariate pool too small: need {needed} rows in group {group}, found {found}")]
    PoolTooSmall {
        group: usize,
        needed: usize,
        found: usize,
    },

    #[error("both classes must be present in the truth vector")]
    SingleClassTruth,
}
