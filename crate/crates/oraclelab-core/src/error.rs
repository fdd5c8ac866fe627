use alloc::string::String;

/// Errors raised anywhere in the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown register label `{0}`")]
    UnknownRegister(String),
    #[error("duplicate register label `{0}`")]
    DuplicateRegister(String),
    #[error("register `{0}` has dimension zero")]
    ZeroDimension(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operators are defined on different register layouts")]
    LayoutMismatch,
    #[error("total dimension exceeds the memory cap of {cap}")]
    CapExceeded { cap: usize },
    #[error("operator has non-finite entries")]
    NonFinite,
    #[error("operator is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("density operator has trace {0}, expected 1")]
    BadTrace(f64),
    #[error("output bit-length must be between 1 and 30, got {0}")]
    InvalidBitLength(u32),
    #[error("domain must be non-empty")]
    EmptyDomain,
    #[error("input {x} outside the domain of size {domain}")]
    DomainOutOfRange { x: u64, domain: u64 },
    #[error("value {t} outside the codomain of size {size}")]
    CodomainOutOfRange { t: u64, size: u64 },
    #[error("query budget of {cap} queries exhausted")]
    QueryBudgetExhausted { cap: usize },
    #[error("state support has a database with more than {cap} entries")]
    SupportExceedsCap { cap: usize },
    #[error("malformed circuit: {0}")]
    MalformedCircuit(String),
    #[error("the adversary queried the extraction interface, which this experiment forbids")]
    ForbiddenExtraction,
    #[error("round structure violated: {0}")]
    RoundStructure(String),
    #[error("invalid parameters: {0}")]
    InvalidSpec(String),
    #[error("exact rational arithmetic overflowed")]
    RationalOverflow,
    #[error("search space too large for exhaustive enumeration")]
    SearchTooLarge,
    #[error("the adversary queried the challenge ciphertext to decapsulation")]
    ChallengeQueried,
    #[error("game tree exceeds {0} leaves")]
    TooManyLeaves(usize),
}

pub type Result<T> = core::result::Result<T, Error>;
