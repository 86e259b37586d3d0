//! Classical side of Shor-style factoring.
//!
//! An exact model of the ideal quantum order-finding oracle ([`qofa`]) is
//! paired with three post-processing strategies ([`factoring`]): the
//! standard Shor step, a single-query algorithm for safe semiprimes, and
//! cheap improvements for general integers. [`experiments`] holds the
//! census and sweep harness built on top of them.

pub mod error;
pub mod experiments;
pub mod factoring;
pub mod numtheory;
pub mod primes;
pub mod qofa;
pub mod rational;

pub use error::{Error, Result};
pub use factoring::{FactorResult, FailureReason};
pub use numtheory::{Factorization, Natural};
pub use primes::SafeSemiprime;
pub use qofa::{OracleMode, QofaOutcome};
