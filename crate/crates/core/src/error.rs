use thiserror::Error;

use crate::model::State;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("state {state} has {got} coordinates, model expects {expected}")]
    DimensionMismatch {
        state: State,
        expected: usize,
        got: usize,
    },

    #[error("invalid initial distribution: {0}")]
    InvalidInitial(String),

    #[error("domain expression error: {0}")]
    DomainParse(String),

    #[error("truncation is empty")]
    EmptyTruncation,

    #[error("invalid truncation: {0}")]
    InvalidTruncation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepLimit { max_steps: usize, t: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("non-finite value in solution at t = {t}")]
    NonFinite { t: f64 },

    #[error("component {index} is {value:e} at t = {t}, below the negativity tolerance")]
    Negative { index: usize, value: f64, t: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("monotonicity violated: {0}")]
    Monotonicity(String),
}

pub type Result<T> = std::result::Result<T, Error>;
