//! Classical model of an ideal quantum order-finding oracle.
//!
//! A call on `(a, N)` with true order `r = ord_N(a)` draws `t` uniformly from
//! `{1, ..., r}` and returns `d = r / gcd(t, r)`: the denominator recovered
//! by the continued-fraction step when the measured phase is exactly `t/r`.
//! Measurement blur is not modelled.
//!
//! Randomness comes from ChaCha8 streams: [`task_rng`] seeds the generator
//! from a 64-bit seed and selects stream number `task`, so every work item of
//! a sweep owns an independent, reproducible stream.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numtheory::{
    factorize, lambda_factorization, multiplicative_order, Factorization, Natural,
};

/// Largest order for which outcomes are enumerated `t` by `t`; above this
/// the divisor distribution `phi(d)/r` is used instead.
pub const EXHAUSTIVE_BUDGET: u64 = 10_000_000;

/// Random stream number `task` under `seed`.
pub fn task_rng(seed: u64, task: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task);
    rng
}

/// One oracle call.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QofaOutcome<T = u64> {
    pub a: T,
    pub n: T,
    /// True order of `a` modulo `n`.
    pub r: T,
    /// Multiplier in `[1, r]`.
    pub t: T,
    /// Returned divisor `r / gcd(t, r)`.
    pub d: T,
}

/// How an experiment consults the oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleMode {
    /// Monte Carlo draws of `t` from seeded streams.
    Sampled { seed: u64 },
    /// Exact: every `t` in `[1, r]` weighted equally (or, equivalently, every
    /// divisor `d` weighted by `phi(d)/r`).
    Exhaustive,
    /// Always returns the true order.
    Perfect,
}

/// Outcome for a given multiplier `t`.
pub fn qofa_with_multiplier<T: Natural>(a: &T, n: &T, r: &T, t: &T) -> QofaOutcome<T> {
    debug_assert!(t >= &T::one() && t <= r);
    let d = r.clone() / t.gcd(r);
    QofaOutcome {
        a: a.clone(),
        n: n.clone(),
        r: r.clone(),
        t: t.clone(),
        d,
    }
}

/// One sampled call: `t` uniform on `[1, r]`.
pub fn qofa_sample<T: Natural, R: RngCore + ?Sized>(
    a: &T,
    n: &T,
    r: &T,
    rng: &mut R,
) -> QofaOutcome<T> {
    assert!(r >= &T::one(), "order must be positive");
    let t = T::uniform_below(rng, r) + T::one();
    qofa_with_multiplier(a, n, r, &t)
}

/// A perfect call (`t = 1`, so `d = r`).
pub fn qofa_perfect<T: Natural>(a: &T, n: &T, r: &T) -> QofaOutcome<T> {
    qofa_with_multiplier(a, n, r, &T::one())
}

/// Exact distribution of `d` when `r` is given factored: `P(d) = phi(d)/r`
/// for every divisor `d`.
pub fn qofa_distribution_factored<T: Natural>(
    r_fact: &Factorization<T>,
) -> Result<BTreeMap<T, BigRational>> {
    let r = BigInt::from(r_fact.value()?.to_biguint());
    Ok(r_fact
        .divisors_with_phi()?
        .into_iter()
        .map(|(d, phi)| {
            let p = BigRational::new(BigInt::from(phi.to_biguint()), r.clone());
            (d, p)
        })
        .collect())
}

/// Exact distribution of `d` for a 64-bit order.
pub fn qofa_distribution(r: u64) -> Result<BTreeMap<u64, BigRational>> {
    assert!(r >= 1, "order must be positive");
    qofa_distribution_factored(&factorize(r))
}

/// Distribution of `d` computed by enumerating every `t` in `[1, r]`.
pub fn qofa_distribution_enumerated(r: u64) -> Result<BTreeMap<u64, BigRational>> {
    let counts = enumerate_divisor_counts(r)?;
    Ok(counts
        .into_iter()
        .map(|(d, c)| (d, BigRational::new(BigInt::from(c), BigInt::from(r))))
        .collect())
}

/// Number of `t` in `[1, r]` giving each `d`, by enumeration.
pub fn enumerate_divisor_counts(r: u64) -> Result<BTreeMap<u64, u64>> {
    if r > EXHAUSTIVE_BUDGET {
        return Err(Error::BoundExceeded {
            bound: EXHAUSTIVE_BUDGET,
        });
    }
    let mut counts = BTreeMap::new();
    for t in 1..=r {
        *counts.entry(r / t.gcd(&r)).or_insert(0u64) += 1;
    }
    Ok(counts)
}

/// A source of oracle answers for the factoring strategies.
pub trait Qofa<T> {
    /// One call on `(a, N)` for the modulus the oracle was built for.
    fn query(&mut self, a: &T) -> Result<QofaOutcome<T>>;

    /// Calls made so far.
    fn calls(&self) -> u64;
}

/// Draws answers for a fixed modulus.
///
/// The simulator knows the factorization of `lambda(N)` and uses it to
/// compute true orders; that knowledge never reaches the post-processing.
#[derive(Clone, Debug)]
pub struct SimulatedQofa<T: Natural = u64> {
    n: T,
    lambda_fact: Factorization<T>,
    rng: Option<ChaCha8Rng>,
    calls: u64,
}

impl<T: Natural> SimulatedQofa<T> {
    /// Oracle for `N` with the given factorization. `mode` must be
    /// [`OracleMode::Sampled`] or [`OracleMode::Perfect`].
    pub fn new(n_fact: &Factorization<T>, mode: OracleMode) -> Result<Self> {
        let n = n_fact.value()?;
        let lambda_fact = lambda_factorization(n_fact)?;
        Self::with_lambda(n, lambda_fact, mode)
    }

    pub fn with_lambda(n: T, lambda_fact: Factorization<T>, mode: OracleMode) -> Result<Self> {
        let rng = match mode {
            OracleMode::Sampled { seed } => Some(task_rng(seed, 0)),
            OracleMode::Perfect => None,
            OracleMode::Exhaustive => {
                return Err(Error::InvalidArgument(
                    "exhaustive mode has no single-call oracle".into(),
                ))
            }
        };
        Ok(Self {
            n,
            lambda_fact,
            rng,
            calls: 0,
        })
    }

    /// Sampling oracle drawing from an explicit stream.
    pub fn with_rng(n: T, lambda_fact: Factorization<T>, rng: ChaCha8Rng) -> Self {
        Self {
            n,
            lambda_fact,
            rng: Some(rng),
            calls: 0,
        }
    }

    pub fn n(&self) -> &T {
        &self.n
    }

    pub fn lambda_factorization(&self) -> &Factorization<T> {
        &self.lambda_fact
    }

    /// True order of `a`, without counting a call.
    pub fn true_order(&self, a: &T) -> Result<T> {
        multiplicative_order(a, &self.n, &self.lambda_fact)
    }
}

impl<T: Natural> Qofa<T> for SimulatedQofa<T> {
    fn query(&mut self, a: &T) -> Result<QofaOutcome<T>> {
        let r = self.true_order(a)?;
        self.calls += 1;
        Ok(match self.rng.as_mut() {
            Some(rng) => qofa_sample(a, &self.n, &r, rng),
            None => qofa_perfect(a, &self.n, &r),
        })
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}
