use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid preferences: {0}")]
    InvalidPreferences(String),

    #[error("the pair method needs at least 3 parties, got {0}")]
    TooFewParties(usize),

    #[error("balanced list designs need an even number of parties >= 4, got {0}")]
    OddN(usize),

    #[error("design does not identify p: numerical rank {rank} < {n_parties}")]
    RankDeficient {
        rank: usize,
        n_parties: usize,
        /// Unit vector spanning (part of) the null space of the stacked matrix.
        direction: Vec<f64>,
    },

    #[error("bad weights: {0}")]
    BadWeights(String),

    #[error("invalid list {index}: {reason}")]
    InvalidList { index: usize, reason: String },

    #[error("invalid design block {index}: {reason}")]
    InvalidBlock { index: usize, reason: String },

    #[error("block {0} has no responses")]
    EmptyBlock(usize),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("limit weight {index} is {value}, must be > 0")]
    AlphaNotPositive { index: usize, value: f64 },

    #[error("party {0} has zero probability")]
    ZeroProbabilityParty(usize),

    #[error("sensitive set is empty")]
    EmptySensitiveSet,

    #[error("sensitive set has probability {0}, must lie strictly between 0 and 1")]
    DegenerateSensitiveSet(f64),

    #[error("response {response} is possible under S but impossible under its complement")]
    AbsoluteContinuityViolation { response: usize },

    #[error("party index {index} out of range for {n_parties} parties")]
    PartyOutOfRange { index: usize, n_parties: usize },

    #[error("standard deviation of the test statistic is zero")]
    ZeroVariance,

    #[error("enumeration would visit {0} outcomes, limit is 1000000")]
    TooLarge(u128),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{message} (line {line}, column {column})")]
    FileFormat {
        line: u64,
        column: usize,
        message: String,
    },
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidPreferences(_) => "InvalidPreferences",
            Error::TooFewParties(_) => "TooFewParties",
            Error::OddN(_) => "OddN",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::BadWeights(_) => "BadWeights",
            Error::InvalidList { .. } => "InvalidList",
            Error::InvalidBlock { .. } => "InvalidBlock",
            Error::EmptyBlock(_) => "EmptyBlock",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::AlphaNotPositive { .. } => "AlphaNotPositive",
            Error::ZeroProbabilityParty(_) => "ZeroProbabilityParty",
            Error::EmptySensitiveSet => "EmptySensitiveSet",
            Error::DegenerateSensitiveSet(_) => "DegenerateSensitiveSet",
            Error::AbsoluteContinuityViolation { .. } => "AbsoluteContinuityViolation",
            Error::PartyOutOfRange { .. } => "PartyOutOfRange",
            Error::ZeroVariance => "ZeroVariance",
            Error::TooLarge(_) => "TooLarge",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::FileFormat { .. } => "FileFormatError",
        }
    }
}
