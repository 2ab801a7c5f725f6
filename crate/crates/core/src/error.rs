use thiserror::Error;

use crate::netcore::NetError;

/// Failure to build one of the explicit network constructions.
#[derive(Debug, Error)]
pub enum BuildError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("capacity exceeded: {needed} breakpoints requested, at most {available} fit the budget")]
    Capacity { needed: usize, available: usize },
    #[error("requested accuracy {requested} is below the achievable minimum {minimum}")]
    Resolution { requested: f64, minimum: f64 },
    #[error(transparent)]
    Net(#[from] NetError),
}

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<(), BuildError> {
    if cond {
        Ok(())
    } else {
        Err(BuildError::Precondition(msg()))
    }
}
