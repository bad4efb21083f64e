use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite phase-space coordinate {coordinate} = {value}")]
    NonFinite { coordinate: String, value: String },

    #[error("proposal vector has zero norm; resample")]
    ZeroNorm,

    #[error("rejection sampler exceeded {0} proposals without acceptance")]
    AcceptanceExhausted(u64),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("at least 2 batches are required for a batch-means error, got {0}")]
    TooFewBatches(u64),

    #[error("unstable denominator for {what}: mean {mean:.3e} is not above 5 x stderr {stderr:.3e}")]
    UnstableDenominator {
        what: String,
        mean: f64,
        stderr: f64,
    },

    #[error("degenerate quantity: {0}")]
    Degenerate(String),

    #[error("Fock truncation tail {tail:.3e} exceeds tolerance {tolerance:.1e} (r = {r}, n_max = {n_max})")]
    TruncationTail {
        tail: f64,
        tolerance: f64,
        r: f64,
        n_max: usize,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
