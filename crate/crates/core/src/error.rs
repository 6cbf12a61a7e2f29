use thiserror::Error;

use crate::geometry::Family;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("operation requires a {expected} model, got {found}")]
    FamilyMismatch { expected: Family, found: Family },

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Step 2 rejection sampler gave up. `rect_prob` is the closed-form
    /// acceptance probability of the block, when it could be computed.
    #[error(
        "rejection sampler exhausted {attempts} attempts ({accepted} accepted, \
         empirical rate {rate:.3e}, rectangle probability {rect_prob:.3e})"
    )]
    RejectionFailure {
        attempts: u64,
        accepted: u64,
        rate: f64,
        rect_prob: f64,
    },

    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_step(self, step: &'static str) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    /// Strips step tags and returns the innermost error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }
}
