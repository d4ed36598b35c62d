use thiserror::Error;

pub type Result<T> = std::result::Result<T, FvrError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FvrError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid selection: {0}")]
    InvalidSelection(String),

    #[error("selected set is empty; false selection proportions are undefined")]
    EmptySelection,

    #[error("projection is degenerate and the selected set has {size} variables, above the enumeration cap of {cap}")]
    DegenerateProjection { size: usize, cap: usize },

    #[error("restricted augmented covariance is singular (condition number {condition:.3e}); use the minimal-subset route")]
    DegenerateGraph { condition: f64 },

    #[error("subset enumeration over {size} variables exceeds the cap of {cap}")]
    EnumerationCap { size: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient holdout rows: have {rows}, need more than {needed}")]
    InsufficientHoldout { rows: usize, needed: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("factorization failed: {0}")]
    Factorization(String),
}
