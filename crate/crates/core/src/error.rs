use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("negative trait value {0}")]
    NegativeTrait(f64),

    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),

    #[error("no interior minimizer: {0}")]
    NoInteriorMinimizer(String),

    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    #[error("moment E[Θ^{exponent}] is infinite for this kernel")]
    InfiniteMoment { exponent: f64 },

    #[error("weight {value} exceeds declared bound {bound}")]
    WeightBound { value: f64, bound: f64 },

    #[error("replica {index} failed: {message}")]
    Replica { index: usize, message: String },

    #[error("{0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
