use thiserror::Error;

/// Every failure the library reports. Variants map one-to-one onto the guard
/// conditions of the individual operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("chain is not ergodic: {0}")]
    NotErgodic(String),
    #[error("chain is not reversible with respect to its stationary distribution (max imbalance {0:e})")]
    NotReversible(f64),
    #[error("chain is not lazy: P[{state}][{state}] = {diagonal} < 1/2; lazify it first")]
    NotLazy { state: usize, diagonal: f64 },
    #[error("{what} too large: {size} exceeds the limit of {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },
    #[error("weight must be positive, got {value} at index {index}")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("stationary distribution has zero mass at state {0}")]
    ZeroStationaryMass(usize),
    #[error("state set has zero stationary mass")]
    EmptySet,
    #[error("state set mass {0} exceeds 3/4")]
    BadSetMass(f64),
    #[error("conductance profile is empty")]
    EmptyProfile,
    #[error("blocking conductance function vanishes on ({lo}, {hi}]")]
    ZeroPsi { lo: f64, hi: f64 },
    #[error("no contraction: beta = {0} >= 1")]
    NoContraction(f64),
    #[error("graph is not connected: {0}")]
    NotConnected(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("rejection budget of {0} trials exhausted without a perfect matching")]
    RejectionBudgetExhausted(usize),
    #[error("matrix is not dense: row {row} has {ones} ones, need at least n/2")]
    NotDense { row: usize, ones: usize },
    #[error("graph has no perfect matching")]
    NoPerfectMatching,
    #[error("hole class ({0}, {1}) has no near-perfect matching")]
    EmptyHoleClass(usize, usize),
    #[error("spin values must be -1 or +1, got {value} at index {index}")]
    BadSpinValue { index: usize, value: i32 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("start point lies outside the body")]
    StartOutsideBody,
    #[error("body rounding is inconsistent: {0}")]
    BadRounding(String),
    #[error("cut at {threshold} holds mass {mass} > half of {total}")]
    CutTooLarge {
        threshold: f64,
        mass: f64,
        total: f64,
    },
    #[error("iteration cap of {0} reached without convergence")]
    IterationCap(usize),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidChain(_) => "InvalidChain",
            Error::InvalidDistribution(_) => "InvalidDistribution",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotErgodic(_) => "NotErgodic",
            Error::NotReversible(_) => "NotReversible",
            Error::NotLazy { .. } => "NotLazy",
            Error::TooLarge { .. } => "TooLarge",
            Error::NonPositiveWeight { .. } => "NonPositiveWeight",
            Error::ZeroStationaryMass(_) => "ZeroStationaryMass",
            Error::EmptySet => "EmptySet",
            Error::BadSetMass(_) => "BadSetMass",
            Error::EmptyProfile => "EmptyProfile",
            Error::ZeroPsi { .. } => "ZeroPsi",
            Error::NoContraction(_) => "NoContraction",
            Error::NotConnected(_) => "NotConnected",
            Error::InvalidState(_) => "InvalidState",
            Error::RejectionBudgetExhausted(_) => "RejectionBudgetExhausted",
            Error::NotDense { .. } => "NotDense",
            Error::NoPerfectMatching => "NoPerfectMatching",
            Error::EmptyHoleClass(..) => "EmptyHoleClass",
            Error::BadSpinValue { .. } => "BadSpinValue",
            Error::InvalidModel(_) => "InvalidModel",
            Error::StartOutsideBody => "StartOutsideBody",
            Error::BadRounding(_) => "BadRounding",
            Error::CutTooLarge { .. } => "CutTooLarge",
            Error::IterationCap(_) => "IterationCap",
            Error::Parse(_) => "Parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn too_large(what: &'static str, size: usize, limit: usize) -> Result<()> {
    if size > limit {
        Err(Error::TooLarge { what, size, limit })
    } else {
        Ok(())
    }
}
