use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("not enough samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("filter taps are not unit-energy normalized (sum of squares = {sum_sq})")]
    FilterNotNormalized { sum_sq: f64 },

    #[error("no sign change of the g* residual on [{lo:e}, {hi:e}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error(
        "unphysical variances: measured {measured:e} below conditional quantum {conditional:e}"
    )]
    Unphysical { measured: f64, conditional: f64 },

    #[error("degenerate spectrum: bin {bin} has non-positive density {value:e}")]
    DegenerateSpectrum { bin: usize, value: f64 },

    #[error("{n} is not an admissible Dodis length (prime with 2 as a primitive root)")]
    InadmissibleLength { n: usize },

    #[error("matrix is not orthogonal (max deviation {deviation:e})")]
    NotOrthogonal { deviation: f64 },

    #[error("all-zero pool cannot be normalized")]
    ZeroPool,

    #[error("unknown reference distribution `{0}`")]
    UnknownReference(String),

    #[error("bin {bin} has zero expected mass")]
    EmptyBin { bin: usize },

    #[error("entropy stream exhausted after {produced} of {needed} seed bits")]
    StreamExhausted { produced: usize, needed: usize },

    #[error(
        "block_m = {block_m} exceeds the extractable length {extractable} \
         (block_n = {block_n}, h_min/bit = {h_min_per_bit:.4}, epsilon = {epsilon:e})"
    )]
    ExtractionBudget {
        block_m: usize,
        extractable: usize,
        block_n: usize,
        h_min_per_bit: f64,
        epsilon: f64,
    },

    #[error("block {block}: {source}")]
    AtBlock {
        block: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_block(self, block: u64) -> Self {
        Error::AtBlock {
            block,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
