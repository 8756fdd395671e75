use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter violates a domain invariant. `field` names the parameter.
    #[error("{field} {reason}")]
    Invalid { field: String, reason: String },

    /// A queue with zero allocated workload; callers short-circuit these.
    #[error("allocation rate is zero: the queue is empty")]
    EmptyQueue,

    #[error("lag index n must be at least 1")]
    ZeroLag,

    #[error("sample series is empty")]
    EmptySeries,

    #[error("{0} is undefined")]
    Undefined(String),

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("problem is infeasible: {0}")]
    Infeasible(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid { field: field.into(), reason: reason.into() }
    }
}
