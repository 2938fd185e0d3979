use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cannot sample from null measure")]
    NullMeasure,

    #[error("grid step {step} leaves no lattice point inside the domain")]
    EmptyGrid { step: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("particle count mismatch: expected {expected}, got {got}")]
    ParticleCountMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no state recorded")]
    NothingRecorded,

    #[error("mass extinct at iteration {iteration}")]
    MassExtinct { iteration: usize },

    #[error("safeguard violated at iteration {iteration}: {what}")]
    Safeguard { iteration: usize, what: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
