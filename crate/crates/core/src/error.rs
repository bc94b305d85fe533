use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid side map: {0}")]
    InvalidChi(String),

    #[error("enumeration cap exceeded: n = {n} > {cap}")]
    CapExceeded { n: usize, cap: usize },

    #[error("partition {0} is not bi-non-crossing for the given side map")]
    NotBiNonCrossing(String),

    #[error("moment functional cannot evaluate: {0}")]
    Unsupported(String),

    #[error("label/side mismatch: {0}")]
    SideMismatch(String),

    #[error("covariance matrix invalid: {0}")]
    InvalidCovariance(String),

    #[error("Fock depth overflow: word would reach length {required}, cap is {cap}")]
    DepthOverflow { required: usize, cap: usize },

    #[error("q-inner product length guard exceeded: {0} > 8")]
    LengthGuard(usize),

    #[error("q mismatch between operators: {0}")]
    QMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("odd total normalisation exponent {0} with nonzero raw value")]
    OddNormalisation(u32),

    #[error("internal mismatch: {0}")]
    Mismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown factor: {0}")]
    UnknownFactor(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
