use thiserror::Error;

use crate::engine::EventLog;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model parameters or rate profile.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Iteration failed to converge, or a non-finite value appeared.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A spectral series could not be certified at the requested time.
    /// Small times should use the closed-form bounds instead.
    #[error(
        "series regime error: t = {t} is below the certified minimum {t_min:.6} \
         for {max_terms} terms; use the small-time bounds"
    )]
    Regime { t: f64, t_min: f64, max_terms: usize },

    /// Particle budget or position ceiling exceeded. Carries the events
    /// observed before the abort.
    #[error("capacity error: {message}")]
    Capacity {
        message: String,
        partial: Option<Box<EventLog>>,
    },

    #[error("usage error: {0}")]
    Usage(String),

    /// Error tagged with the replica it came from.
    #[error("replica {replica}: {source}")]
    Replica {
        replica: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Capacity/numeric class errors map to the same CLI exit status.
    pub fn is_runtime(&self) -> bool {
        match self {
            Error::Numeric(_) | Error::Regime { .. } | Error::Capacity { .. } => true,
            Error::Replica { source, .. } => source.is_runtime(),
            _ => false,
        }
    }
}
