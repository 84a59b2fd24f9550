use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("cannot normalize a zero vector")]
    ZeroNorm,

    #[error("invalid value for `{name}`: {value} ({reason})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error(
        "per-step jump probability {probability:.4} exceeds the limit {limit}; reduce the time step"
    )]
    StepSizeViolation { probability: f64, limit: f64 },

    #[error("no jump channel has nonzero weight at the sampled jump time")]
    DegenerateJump,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}
