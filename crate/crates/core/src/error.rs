use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A model or configuration parameter is out of its domain.
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// A series did not reach its truncation bound within the term budget.
    #[error("{op} did not converge after {terms} terms (partial value {partial}, remaining bound {bound})")]
    NonConvergence {
        op: &'static str,
        terms: usize,
        partial: f64,
        bound: f64,
    },

    #[error("{op}: {message}")]
    Numerical { op: &'static str, message: String },

    /// The requested false-alarm rate cannot be reached by any threshold.
    #[error("target false-alarm rate {target} is outside the achievable range [{min}, {max}]")]
    Calibration { target: f64, min: f64, max: f64 },

    #[error("trial {trial}: {source}")]
    Trial { trial: u64, source: Box<Error> },
}

impl Error {
    pub(crate) fn validation(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors caused by numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence { .. } | Error::Numerical { .. } => true,
            Error::Trial { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
