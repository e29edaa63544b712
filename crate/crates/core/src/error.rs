use thiserror::Error;

/// Errors raised by the simulator and the fitting routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },

    /// Non-finite input or output in a numerical kernel.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The adaptive integrator could not make progress.
    #[error("integration diverged: {0}")]
    Divergence(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    /// The normal matrix of a fit is singular along the named direction.
    #[error("rank-deficient fit, unidentifiable combination: {0}")]
    RankDeficient(String),

    #[error("dataset {index}: {source}")]
    Dataset {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_configuration(&self) -> bool {
        match self {
            Error::Domain(_) | Error::InvalidParams { .. } | Error::Config(_) => true,
            Error::Dataset { source, .. } => source.is_configuration(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
