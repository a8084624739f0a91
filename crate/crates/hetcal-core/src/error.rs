use thiserror::Error;

/// Errors produced by dataset loading, fitting, and metric evaluation.
#[derive(Debug, Error)]
pub enum HetcalError {
    #[error("missing required column `{0}` in header")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{value}` in column `{column}` as a number")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: label must be 0 or 1, got `{value}`")]
    InvalidLabel { row: usize, value: String },
    #[error("row {row}: score must be finite, got {value}")]
    NonFiniteScore { row: usize, value: f64 },
    #[error("{0} must be nonempty")]
    EmptyInput(&'static str),
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("split produced an empty part: sizes {0:?}")]
    EmptySplit([usize; 3]),
    #[error("both labels must be present: distribution has no label-{0} mass")]
    SingleLabel(u8),
    #[error("feature arity mismatch: expected {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("atom probabilities sum to {0}, expected 1 within 1e-12")]
    BadMass(f64),
    #[error("negative probability {0} in distribution")]
    NegativeMass(f64),
    #[error("support of {0} atom keys exceeds the brute-force bound of {1}")]
    SupportTooLarge(usize, usize),
    #[error("partition map does not cover fine partition id {0}")]
    NonRefiningMap(u32),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model file error: {0}")]
    Model(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, HetcalError>;
