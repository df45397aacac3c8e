use thiserror::Error;

/// Errors produced by the solvers and evaluators in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Bad arguments: dimension mismatches, out-of-range weights, invalid configs.
    #[error("usage error: {0}")]
    Usage(String),

    /// An integrand produced a non-finite value.
    #[error("non-finite integrand value {value} at state {state:?}")]
    NonFinite { value: f64, state: Vec<f64> },

    /// A bracketing search could not find a sign change.
    #[error("no bracket found: {0}")]
    Bracket(String),

    /// An iterative solver hit its iteration cap.
    #[error(
        "{solver} did not converge after {iterations} iterations (last residual {residual:e})"
    )]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    /// Arrival rate at or above the ergodic service rate.
    #[error(
        "unstable queue: arrival {arrival} bits/frame >= mean service {mean_service} bits/frame"
    )]
    UnstableQueue { arrival: f64, mean_service: f64 },

    /// Too few tail exceedances to estimate a decay exponent.
    #[error(
        "insufficient exceedances: {count} at q = {q}; largest usable q is {largest_usable:?}"
    )]
    InsufficientTail {
        q: f64,
        count: usize,
        largest_usable: Option<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
