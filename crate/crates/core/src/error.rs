use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid code: {0}")]
    InvalidCode(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("length {len} is not a multiple of {multiple}")]
    NotMultiple { len: usize, multiple: usize },
    #[error("interleaver length must be at least 1")]
    EmptyInterleaver,
    #[error("message length {0} exceeds the exhaustive search bound of 16")]
    EnumerationBound(usize),
    #[error("noise variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("probability {0} outside [0, 0.5]")]
    InvalidProbability(f64),
    #[error("unknown constellation {0:?}")]
    UnknownConstellation(String),
    #[error("unknown combiner {0:?}")]
    UnknownCombiner(String),
    #[error("sub-block size k = {0} exceeds 8")]
    SubblockTooLarge(usize),
    #[error("linear combiners require identical source and relay constellations ({source_const} vs {relay_const})")]
    ModulationMismatch {
        source_const: &'static str,
        relay_const: &'static str,
    },
    #[error("coded length {coded} incompatible with {bits_per_symbol} bits per symbol")]
    RateIncompatible { coded: usize, bits_per_symbol: usize },
    #[error("residual BER table: {0}")]
    Table(String),
    #[error("missing residual BER table (required by the {0} combiner in relay mode)")]
    MissingTable(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
