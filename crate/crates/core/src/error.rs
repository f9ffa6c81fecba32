//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    // scalar arithmetic
    #[error("radicand {0} is not square-free")]
    NonSquareFreeRadicand(u64),
    #[error("radicand {0} is negative")]
    NegativeRadicand(i64),
    #[error("incompatible radicands {0} and {1}")]
    IncompatibleRadicands(u64, u64),
    #[error("division by zero")]
    DivisionByZero,

    // system construction and iteration
    #[error("invalid beta: {0}")]
    InvalidBeta(String),
    #[error("digit set is not allowable: {0}")]
    NotAllowable(String),
    #[error("invalid digit set: {0}")]
    InvalidDigits(String),
    #[error("point {0} lies outside the working domain")]
    OutOfDomain(String),
    #[error("operation requires support case {expected}, system is {actual}")]
    WrongCase {
        expected: &'static str,
        actual: &'static str,
    },
    #[error("float backend: point {x} is within tolerance of cell boundary {boundary}")]
    BoundaryAmbiguous { x: String, boundary: String },
    #[error("repeating tail must be nonempty")]
    EmptyTail,

    // interval tree
    #[error("word addresses an empty fundamental interval (digit {at} inadmissible)")]
    NotAdmissible { at: usize },
    #[error("fundamental interval of the word is not full")]
    NotFull,
    #[error("requested depth {requested} exceeds the cap {cap}")]
    DepthExceeded { requested: usize, cap: usize },

    // tower
    #[error("tower point does not lie in the rectangle it addresses")]
    InvalidPoint,
    #[error("exact backend rejects points on cell boundaries")]
    BoundaryPoint,
    #[error("orbit budget of {cap} iterations exhausted")]
    OrbitBudgetExceeded { cap: usize },

    // density
    #[error("critical orbits not detected as eventually periodic within {cap} values")]
    NotEventuallyPeriodic { cap: usize },
    #[error("cannot normalize a function with zero integral")]
    ZeroIntegral,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
