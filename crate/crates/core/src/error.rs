use alloc::string::String;

/// Errors raised by the in-memory engine.
///
/// Every variant has a stable machine-readable name (see [`Error::name`])
/// which the command-line tool prints on failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFiniteValue(&'static str),
    #[error("zero-norm vector in {0}")]
    ZeroVector(&'static str),
    #[error("duplicate or missing cardinal view in record {0}")]
    DuplicateView(String),
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("{members} members exceed dimension {dim} for pseudo-inverse aggregation")]
    TooManyMembers { members: usize, dim: usize },
    #[error("expected 4 views, found {0}")]
    WrongViewCount(usize),
    #[error("members mix sum and pseudo-inverse memory vectors")]
    MixedModes,
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("index holds no records")]
    EmptyIndex,
    #[error("re-ranking needs at least 2 candidates, found {0}")]
    TooFewCandidates(usize),
    #[error("candidate {0} has non-positive similarity mass")]
    NonPositiveMass(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Stable variant name, used as the machine-parsable error tag.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonFiniteValue(_) => "NonFiniteValue",
            Error::ZeroVector(_) => "ZeroVector",
            Error::DuplicateView(_) => "DuplicateView",
            Error::EmptyInput(_) => "EmptyInput",
            Error::TooManyMembers { .. } => "TooManyMembers",
            Error::WrongViewCount(_) => "WrongViewCount",
            Error::MixedModes => "MixedModes",
            Error::DuplicateId(_) => "DuplicateId",
            Error::EmptyIndex => "EmptyIndex",
            Error::TooFewCandidates(_) => "TooFewCandidates",
            Error::NonPositiveMass(_) => "NonPositiveMass",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
