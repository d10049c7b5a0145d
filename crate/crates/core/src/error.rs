use alloc::string::String;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("declared length {declared} bits exceeds the {available} bits available")]
    LengthExceedsData { declared: usize, available: usize },

    #[error("malformed matrix header: {0}")]
    MatrixHeader(String),

    #[error("matrix row {row}: expected {expected} hex digits, found {found}")]
    MatrixRowLength { row: usize, expected: usize, found: usize },

    #[error("matrix row {row}: invalid hex digit {digit:?} at column {col}")]
    MatrixHex { row: usize, col: usize, digit: char },

    #[error("matrix file truncated: expected {expected} rows, found {found}")]
    MatrixTruncated { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("target click probability {target} is not reachable (dark-count floor {floor})")]
    InfeasibleTarget { target: f64, floor: f64 },

    #[error("Poisson cutoff {given} leaves tail mass above 1e-12; need at least {required}")]
    CutoffTooSmall { given: u64, required: u64 },

    #[error("{m} detectors is too many for exhaustive enumeration (limit {limit})")]
    TooLargeForEnumeration { m: usize, limit: usize },

    #[error("no extractable bits at the requested security level")]
    NoExtractableBits,

    #[error("entropy source too short: need {needed} bits, have {available}")]
    InsufficientEntropy { needed: usize, available: usize },

    #[error("{test}: sequence of {found} bits is too short (need {needed})")]
    SequenceTooShort { test: &'static str, needed: usize, found: usize },

    #[error("empty input")]
    EmptyInput,
}

pub type Result<T> = core::result::Result<T, Error>;
