use thiserror::Error;

use crate::optimizer::OptimizationResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The asymptotic formula only covers increments with unbiased marginals.
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("no violation at perfect detection for n = {n} (S = {s_at_one})")]
    NoThreshold { n: usize, s_at_one: f64 },

    #[error("optimizer did not converge from any start (best S = {})", best.best_s.value())]
    NonConvergence { best: Box<OptimizationResult> },

    #[error("matrix of size {0} exceeds the supported maximum of {max}", max = crate::experiment::MAX_MATCHING_SIZE)]
    Size(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
