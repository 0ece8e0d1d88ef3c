use thiserror::Error;

/// Errors raised by the MDP engine, the oracles and the planner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("stage {stage} out of range for horizon {horizon}")]
    StageOutOfRange { stage: usize, horizon: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("negative conditional variance {value} at cell {cell}")]
    NegativeVariance { cell: usize, value: f64 },

    #[error("dataset has an odd number of episodes ({0}); cannot split into equal halves")]
    OddEpisodeCount(usize),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("enumeration cap exceeded: {requested} > {cap}")]
    EnumerationCap { requested: f64, cap: f64 },

    #[error("pair budget exceeded: {requested} pair evaluations > {budget}")]
    PairBudget { requested: f64, budget: f64 },

    #[error("invalid function class: {0}")]
    InvalidClass(String),

    #[error("singular weighted Gram matrix (ridge = {0})")]
    SingularSystem(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("binary search did not terminate within {0} iterations")]
    NonTerminating(usize),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
