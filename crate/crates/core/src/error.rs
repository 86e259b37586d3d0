use thiserror::Error;

use crate::factoring::FailureReason;

/// Errors raised by the arithmetic kernel, the sieves, the oracle model and
/// the factoring strategies.
///
/// A factoring attempt that simply did not find a factor is not an error; it
/// is reported as [`FactorResult::Failure`](crate::factoring::FactorResult).
#[derive(Debug, Error)]
pub enum Error {
    #[error("{a} is not coprime to {n}")]
    NotCoprime { a: String, n: String },

    #[error("brute-force bound {bound} exceeded")]
    BoundExceeded { bound: u64 },

    #[error("bound {bound} exceeds the supported maximum {cap}")]
    BoundTooLarge { bound: u64, cap: u64 },

    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),

    #[error("p{position} = {value} is not a safe prime")]
    NotSafePrime { position: usize, value: String },

    #[error("the two safe primes are equal")]
    Equal,

    #[error("safe prime {value} is too small: (p - 1)/2 must exceed 2")]
    TooSmall { value: String },

    #[error("{0} is even")]
    NotOdd(String),

    #[error("{exponent} is not a multiple of the order of {witness} modulo {n}")]
    BadExponent {
        n: String,
        exponent: String,
        witness: String,
    },

    #[error("no factor after {iterations} iterations ({calls} oracle calls, last failure: {last:?})")]
    IterationBudgetExceeded {
        iterations: u64,
        calls: u64,
        last: Option<FailureReason>,
    },

    #[error("invalid factorization: {0}")]
    InvalidFactorization(String),

    #[error("order invariant violated: {0}")]
    OrderInvariant(String),

    #[error("cannot build an order oracle: {0}")]
    OracleUnavailable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed safe-prime cache: {0}")]
    BadCache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
