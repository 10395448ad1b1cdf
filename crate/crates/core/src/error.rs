use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input data violates a documented invariant (weights, probabilities, shapes of values).
    #[error("validation error: {0}")]
    Validation(String),

    /// Mismatched or unsupported dimensions.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A solver received a problem larger than its configured cap.
    #[error("capacity error: support of size {size} exceeds cap {cap}")]
    Capacity { size: usize, cap: usize },

    /// A scalar parameter is out of its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A state became non-finite during time stepping.
    #[error("simulation diverged at step {step} (t = {time}): {what}")]
    SimulationDiverged { step: usize, time: f64, what: String },

    /// An experiment could not produce a trustworthy result.
    #[error("experiment invalid: {0}")]
    ExperimentInvalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

pub(crate) fn dimension(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}

pub(crate) fn parameter(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
