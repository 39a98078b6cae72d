use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared across the toolkit.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A parameter failed its range or finiteness check.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The intensity pair does not satisfy mu' > mu > 0 and
    /// mu' e^(-mu') > mu e^(-mu), or a derived residual weight is negative.
    #[error("invalid intensity pair: mu={mu}, mu'={mup}")]
    InvalidPair { mu: f64, mup: f64 },

    /// A counting rate required to be positive was zero.
    #[error("zero counting rate: {0}")]
    ZeroRate(&'static str),

    /// The bound formula produced a negative value, which signals observed
    /// rates inconsistent with the source model (the decoy rate sits below
    /// the vacuum plus single-photon floor).
    #[error("bound is negative ({value}); observed rates are inconsistent")]
    NegativeBound { value: f64 },

    /// The constraint solver could not produce a bound.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// A trial produced no detections, so the true tagged fraction is
    /// undefined.
    #[error("no detections; tagged fraction undefined")]
    NoData,

    /// A pulse count exceeds what the sampler can represent.
    #[error("pulse count overflow: {0}")]
    Overflow(String),
}
