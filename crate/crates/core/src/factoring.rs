//! Classical post-processing of oracle answers.
//!
//! * [`sfa_postprocess`] / [`sfa_run`]: the textbook Shor loop, which needs
//!   an even order and `a^(r/2) != -1`.
//! * [`factor_safe_semiprime`]: factors `N = (2 q1 + 1)(2 q2 + 1)` from a
//!   single call on `a = 2`; it only fails when the oracle returns 1 or 2.
//! * [`improved_postprocess`]: cheap extra attempts for general `N`
//!   (`gcd(d, N)`, small-prime roots, and lifting `d` to a multiple of
//!   `lambda(N)` for [`miller_factor`]).

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numtheory::{is_prime, isqrt, multiplicative_order, Factorization, Natural};
use crate::primes::{is_safe_prime, SafeSemiprime};
use crate::qofa::{enumerate_divisor_counts, qofa_distribution_factored, Qofa};
use crate::rational::ratio;

/// Why a post-processing attempt produced no factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureReason {
    /// The candidate order is odd.
    OddOrderDeadEnd,
    /// `a^(d/2) = -1 mod N`.
    MinusOneRoot,
    /// Both `gcd(x - 1, N)` and `gcd(x + 1, N)` are trivial.
    TrivialGcd,
    /// The oracle returned 1 or 2.
    BadQofaDivisor,
    /// The input does not satisfy the method's hypotheses.
    NotApplicable,
    /// `5 | N` but `N = 5`.
    Composite5BranchNotApplicable,
    /// No witness produced a nontrivial square root of 1.
    MillerExhausted,
}

impl FailureReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureReason::OddOrderDeadEnd => "OddOrderDeadEnd",
            FailureReason::MinusOneRoot => "MinusOneRoot",
            FailureReason::TrivialGcd => "TrivialGcd",
            FailureReason::BadQofaDivisor => "BadQofaDivisor",
            FailureReason::NotApplicable => "NotApplicable",
            FailureReason::Composite5BranchNotApplicable => "Composite5BranchNotApplicable",
            FailureReason::MillerExhausted => "MillerExhausted",
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of a factoring attempt. `Factors(f1, f2)` always satisfies
/// `1 < f1 <= f2 < N` and `f1 * f2 = N`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FactorResult<T = u64> {
    Factors(T, T),
    Failure(FailureReason),
}

impl<T: Natural> FactorResult<T> {
    /// The pair `{f, n / f}` for a nontrivial divisor `f` of `n`.
    pub fn split(n: &T, f: T) -> Self {
        debug_assert!(f > T::one() && &f < n && (n.clone() % f.clone()).is_zero());
        let g = n.clone() / f.clone();
        if f <= g {
            FactorResult::Factors(f, g)
        } else {
            FactorResult::Factors(g, f)
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, FactorResult::Factors(..))
    }

    pub fn factors(&self) -> Option<(&T, &T)> {
        match self {
            FactorResult::Factors(a, b) => Some((a, b)),
            FactorResult::Failure(_) => None,
        }
    }

    pub fn failure(&self) -> Option<FailureReason> {
        match self {
            FactorResult::Factors(..) => None,
            FactorResult::Failure(r) => Some(*r),
        }
    }
}

fn nontrivial_gcd<T: Natural>(v: &T, n: &T) -> Option<T> {
    let g = v.gcd(n);
    (g > T::one() && &g < n).then_some(g)
}

fn require_coprime<T: Natural>(a: &T, n: &T) -> Result<()> {
    if a.gcd(n).is_one() {
        Ok(())
    } else {
        Err(Error::NotCoprime {
            a: a.to_string(),
            n: n.to_string(),
        })
    }
}

fn require_positive<T: Natural>(d: &T) -> Result<()> {
    if d.is_zero() {
        Err(Error::InvalidArgument("oracle divisor must be positive".into()))
    } else {
        Ok(())
    }
}

/// Roots of `X^2 - (N - phi + 1) X + N`, i.e. `p1, p2` when `N = p1 p2` is
/// a squarefree semiprime and `phi = phi(N)`.
pub fn factor_semiprime_from_phi<T: Natural>(n: &T, phi: &T) -> FactorResult<T> {
    let na = FactorResult::Failure(FailureReason::NotApplicable);
    if phi.is_zero() || phi > n {
        return na;
    }
    let big_n = n.to_biguint();
    let sum = &big_n + 1u32 - phi.to_biguint();
    let disc = BigInt::from(&sum * &sum) - BigInt::from(&big_n * 4u32);
    if disc.is_negative() {
        return na;
    }
    let disc = disc.magnitude().clone();
    let (root, exact) = isqrt(&disc);
    if !exact || sum < root || !(&sum - &root).is_even() {
        return na;
    }
    let small = (&sum - &root) / 2u32;
    let large = (&sum + &root) / 2u32;
    if small <= BigUint::one() || &small * &large != big_n {
        return na;
    }
    match (T::from_biguint(&small), T::from_biguint(&large)) {
        (Some(a), Some(b)) => FactorResult::Factors(a, b),
        _ => na,
    }
}

/// Standard post-processing of an oracle answer `d` for base `a`.
pub fn sfa_postprocess<T: Natural>(n: &T, a: &T, d: &T) -> Result<FactorResult<T>> {
    require_coprime(a, n)?;
    require_positive(d)?;
    if d.is_odd() {
        return Ok(FactorResult::Failure(FailureReason::OddOrderDeadEnd));
    }
    let x = a.pow_mod(&(d.clone() / T::from_small(2)), n);
    let minus_one = n.clone() - T::one();
    if x == minus_one {
        return Ok(FactorResult::Failure(FailureReason::MinusOneRoot));
    }
    for v in [x.clone() - T::one(), x + T::one()] {
        if let Some(g) = nontrivial_gcd(&v, n) {
            return Ok(FactorResult::split(n, g));
        }
    }
    Ok(FactorResult::Failure(FailureReason::TrivialGcd))
}

/// Result of a full randomized run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SfaRun<T = u64> {
    pub result: FactorResult<T>,
    /// Oracle calls made by this run.
    pub qofa_calls: u64,
    /// Bases tried, including one that shared a factor with `N`.
    pub iterations: u64,
}

/// Shor's loop with the standard post-processing: draw `a` uniformly from
/// `[2, N - 1]`, stop on a lucky gcd, otherwise call the oracle once.
pub fn sfa_run<T, Q, R>(n: &T, oracle: &mut Q, rng: &mut R, max_iters: u64) -> Result<SfaRun<T>>
where
    T: Natural,
    Q: Qofa<T>,
    R: RngCore,
{
    sfa_run_with(n, oracle, rng, max_iters, |n, a, d, _| sfa_postprocess(n, a, d))
}

/// Shor's loop with [`improved_postprocess`] in place of the standard step.
pub fn improved_run<T, Q, R>(
    n: &T,
    oracle: &mut Q,
    rng: &mut R,
    max_iters: u64,
    config: &ImprovedConfig,
) -> Result<SfaRun<T>>
where
    T: Natural,
    Q: Qofa<T>,
    R: RngCore,
{
    sfa_run_with(n, oracle, rng, max_iters, |n, a, d, rng| {
        improved_postprocess(n, a, d, config, rng)
    })
}

/// Shor's loop with a caller-supplied post-processing step.
pub fn sfa_run_with<T, Q, R, P>(
    n: &T,
    oracle: &mut Q,
    rng: &mut R,
    max_iters: u64,
    mut post: P,
) -> Result<SfaRun<T>>
where
    T: Natural,
    Q: Qofa<T>,
    R: RngCore,
    P: FnMut(&T, &T, &T, &mut R) -> Result<FactorResult<T>>,
{
    if n < &T::from_small(4) {
        return Err(Error::InvalidArgument(format!("{n} is too small to factor")));
    }
    let calls_before = oracle.calls();
    let span = n.clone() - T::from_small(2);
    let mut last = None;
    for iteration in 1..=max_iters {
        let a = T::uniform_below(rng, &span) + T::from_small(2);
        if let Some(g) = nontrivial_gcd(&a, n) {
            return Ok(SfaRun {
                result: FactorResult::split(n, g),
                qofa_calls: oracle.calls() - calls_before,
                iterations: iteration,
            });
        }
        let outcome = oracle.query(&a)?;
        let result = post(n, &a, &outcome.d, rng)?;
        match result {
            FactorResult::Factors(..) => {
                return Ok(SfaRun {
                    result,
                    qofa_calls: oracle.calls() - calls_before,
                    iterations: iteration,
                })
            }
            FactorResult::Failure(reason) => last = Some(reason),
        }
    }
    Err(Error::IterationBudgetExceeded {
        iterations: max_iters,
        calls: oracle.calls() - calls_before,
        last,
    })
}

/// Whether `{p, n / p}` is a pair of distinct safe primes above 5.
fn is_safe_split<T: Natural>(n: &T, p: &T) -> bool {
    let other = n.clone() / p.clone();
    let seven = T::from_small(7);
    p != &other && p >= &seven && other >= seven && is_safe_prime(p) && is_safe_prime(&other)
}

/// Classical half of the single-query algorithm: recover `{p1, p2}` from
/// the oracle answer `d` for `a = 2`.
///
/// With `s = d` for even `d` and `s = 2d` otherwise, `s` is `2`, `2 q_i` or
/// `2 q1 q2`. `2 q_i < N/3 < 2 q1 q2` separates the cases (compared as
/// `3s < N`). The recovered pair is checked to be a safe-semiprime split of
/// `N`; anything else reports `NotApplicable`.
pub fn factor_safe_semiprime_from_divisor<T: Natural>(n: &T, d: &T) -> Result<FactorResult<T>> {
    if n.is_even() {
        return Err(Error::NotOdd(n.to_string()));
    }
    require_positive(d)?;
    let na = Ok(FactorResult::Failure(FailureReason::NotApplicable));
    let two = T::from_small(2);
    let s = if d.is_even() {
        d.clone()
    } else {
        match d.checked_mul(&two) {
            Some(s) => s,
            None => return na,
        }
    };
    if s == two {
        return Ok(FactorResult::Failure(FailureReason::BadQofaDivisor));
    }
    let three_s = s.to_biguint() * 3u32;
    let p = if three_s < n.to_biguint() {
        s + T::one()
    } else {
        let half = (n.clone() + T::one()) / two;
        if s > half {
            return na;
        }
        let h = (half - s).to_biguint();
        let h2 = &h * &h;
        let big_n = n.to_biguint();
        if h2 < big_n {
            return na;
        }
        let (root, exact) = isqrt(&(h2 - big_n));
        if !exact {
            return na;
        }
        match T::from_biguint(&(h + root)) {
            Some(p) => p,
            None => return na,
        }
    };
    if p <= T::one() || &p >= n || !(n.clone() % p.clone()).is_zero() || !is_safe_split(n, &p) {
        return na;
    }
    Ok(FactorResult::split(n, p))
}

/// The single-query algorithm for safe semiprimes.
///
/// Returns `{5, N/5}` without calling the oracle when `5 | N`; otherwise
/// makes exactly one call on `a = 2`. The number of calls is available from
/// the oracle.
pub fn factor_safe_semiprime<T, Q>(n: &T, oracle: &mut Q) -> Result<FactorResult<T>>
where
    T: Natural,
    Q: Qofa<T>,
{
    if n.is_even() {
        return Err(Error::NotOdd(n.to_string()));
    }
    let five = T::from_small(5);
    if (n.clone() % five.clone()).is_zero() {
        if n == &five {
            return Ok(FactorResult::Failure(
                FailureReason::Composite5BranchNotApplicable,
            ));
        }
        return Ok(FactorResult::split(n, five));
    }
    if n < &T::from_small(7) {
        return Ok(FactorResult::Failure(FailureReason::NotApplicable));
    }
    let outcome = oracle.query(&T::from_small(2))?;
    factor_safe_semiprime_from_divisor(n, &outcome.d)
}

/// The two possible orders of 2 modulo a safe semiprime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrderClass {
    /// `ord_N(2) = q1 q2`.
    Q1Q2,
    /// `ord_N(2) = 2 q1 q2`.
    TwoQ1Q2,
}

fn order_of_two<T: Natural>(ss: &SafeSemiprime<T>) -> Result<(T, OrderClass)> {
    let r = multiplicative_order(&T::from_small(2), ss.n(), &ss.lambda_factorization())?;
    let q1q2 = ss.q1().clone() * ss.q2().clone();
    if r == q1q2 {
        Ok((r, OrderClass::Q1Q2))
    } else if r == ss.lambda() {
        Ok((r, OrderClass::TwoQ1Q2))
    } else {
        Err(Error::OrderInvariant(format!(
            "ord_{}(2) = {} is neither q1*q2 = {} nor 2*q1*q2 (p1 = {}, p2 = {})",
            ss.n(),
            r,
            q1q2,
            ss.p1(),
            ss.p2()
        )))
    }
}

/// Classifies `ord_N(2)`; any order other than `q1 q2` or `2 q1 q2` is an
/// `OrderInvariant` error.
pub fn order_of_two_class<T: Natural>(ss: &SafeSemiprime<T>) -> Result<OrderClass> {
    order_of_two(ss).map(|(_, class)| class)
}

/// Exact probability that the single-query algorithm fails on `ss`,
/// summing `phi(d)/r` over the oracle answers `d` it cannot use.
pub fn qofa_failure_probability<T: Natural>(ss: &SafeSemiprime<T>) -> Result<BigRational> {
    let (_, class) = order_of_two(ss)?;
    let r_fact = match class {
        OrderClass::TwoQ1Q2 => ss.lambda_factorization(),
        OrderClass::Q1Q2 => Factorization::from_unsorted(vec![
            (ss.q1().clone(), 1),
            (ss.q2().clone(), 1),
        ])?,
    };
    let mut failure = BigRational::zero();
    for (d, p) in qofa_distribution_factored(&r_fact)? {
        if !factor_safe_semiprime_from_divisor(ss.n(), &d)?.is_success() {
            failure += p;
        }
    }
    Ok(failure)
}

/// Same probability by enumerating every multiplier `t` in `[1, ord_N(2)]`.
pub fn qofa_failure_probability_enumerated(ss: &SafeSemiprime<u64>) -> Result<BigRational> {
    let (r, _) = order_of_two(ss)?;
    let mut failures = 0u64;
    for (d, count) in enumerate_divisor_counts(r)? {
        if !factor_safe_semiprime_from_divisor(ss.n(), &d)?.is_success() {
            failures += count;
        }
    }
    Ok(ratio(failures, r))
}

/// One Miller witness against `lambda_multiple = 2^s * m`. `Ok(Some(f))` is
/// a nontrivial factor, `Ok(None)` an uninformative witness.
fn miller_witness<T: Natural>(n: &T, s: u64, m: &T, a: &T, lambda_multiple: &T) -> Result<Option<T>> {
    if let Some(g) = nontrivial_gcd(a, n) {
        return Ok(Some(g));
    }
    let one = T::one();
    let minus_one = n.clone() - T::one();
    let mut x = a.pow_mod(m, n);
    if x == one {
        return Ok(None);
    }
    for _ in 0..s {
        if x == minus_one {
            return Ok(None);
        }
        let y = x.mul_mod(&x, n);
        if y == one {
            return Ok(nontrivial_gcd(&(x - T::one()), n));
        }
        x = y;
    }
    Err(Error::BadExponent {
        n: n.to_string(),
        exponent: lambda_multiple.to_string(),
        witness: a.to_string(),
    })
}

/// Miller's method with explicit witnesses.
pub fn miller_factor_with_witnesses<T, I>(
    n: &T,
    lambda_multiple: &T,
    witnesses: I,
) -> Result<FactorResult<T>>
where
    T: Natural,
    I: IntoIterator<Item = T>,
{
    if n.is_even() {
        return Err(Error::NotOdd(n.to_string()));
    }
    require_positive(lambda_multiple)?;
    let s = lambda_multiple.trailing_zero_bits().unwrap_or(0);
    let mut m = lambda_multiple.clone();
    for _ in 0..s {
        m = m / T::from_small(2);
    }
    for a in witnesses {
        let a = a % n.clone();
        if a.is_zero() {
            continue;
        }
        if let Some(f) = miller_witness(n, s, &m, &a, lambda_multiple)? {
            return Ok(FactorResult::split(n, f));
        }
    }
    Ok(FactorResult::Failure(FailureReason::MillerExhausted))
}

/// Factors `N` from any positive multiple of `lambda(N)` by searching for a
/// nontrivial square root of 1 with up to `max_witnesses` random bases in
/// `[2, N - 2]`.
///
/// `BadExponent` means some coprime witness `a` has `a^L != 1`, so `L` was
/// not a multiple of `lambda(N)`.
pub fn miller_factor<T: Natural, R: RngCore + ?Sized>(
    n: &T,
    lambda_multiple: &T,
    rng: &mut R,
    max_witnesses: usize,
) -> Result<FactorResult<T>> {
    if n < &T::from_small(5) {
        return Err(Error::InvalidArgument(format!("{n} is too small")));
    }
    let span = n.clone() - T::from_small(3);
    let witnesses: Vec<T> = (0..max_witnesses)
        .map(|_| T::uniform_below(rng, &span) + T::from_small(2))
        .collect();
    miller_factor_with_witnesses(n, lambda_multiple, witnesses)
}

/// Knobs for [`improved_postprocess`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImprovedConfig {
    /// Primes `l` tried as `a^(d/l)` when `l | d`.
    pub small_primes: Vec<u64>,
    /// Largest `k` for which `2^k d` is handed to Miller; `None` disables
    /// the lifting step.
    pub lift_max: Option<u32>,
    /// Witness budget per Miller call.
    pub miller_witnesses: usize,
}

impl Default for ImprovedConfig {
    fn default() -> Self {
        Self {
            small_primes: vec![2, 3, 5],
            lift_max: Some(6),
            miller_witnesses: 40,
        }
    }
}

impl ImprovedConfig {
    /// Only the gcd and small-prime steps, no Miller lifting.
    pub fn cheap() -> Self {
        Self {
            lift_max: None,
            ..Self::default()
        }
    }
}

/// Post-processing for general `N`, in increasing order of cost:
///
/// 1. `gcd(d, N)`;
/// 2. for each configured `l | d`, `gcd(a^(d/l) - 1, N)` (and
///    `gcd(a^(d/2) + 1, N)` for `l = 2`);
/// 3. for `k = 0..=lift_max`, Miller on `2^k d`, which succeeds whenever
///    `d = lambda(N) / 2^k`.
///
/// On failure, reports `MillerExhausted` if some `2^k d` was a multiple of
/// `lambda(N)`, and otherwise the reason the standard step gives.
pub fn improved_postprocess<T: Natural, R: RngCore + ?Sized>(
    n: &T,
    a: &T,
    d: &T,
    config: &ImprovedConfig,
    rng: &mut R,
) -> Result<FactorResult<T>> {
    require_coprime(a, n)?;
    require_positive(d)?;
    if let Some(g) = nontrivial_gcd(d, n) {
        return Ok(FactorResult::split(n, g));
    }
    for &l in &config.small_primes {
        let l = T::from_small(l);
        if !(d.clone() % l.clone()).is_zero() {
            continue;
        }
        let x = a.pow_mod(&(d.clone() / l.clone()), n);
        if let Some(g) = nontrivial_gcd(&(x.clone() + n.clone() - T::one()), n) {
            return Ok(FactorResult::split(n, g));
        }
        if l == T::from_small(2) {
            if let Some(g) = nontrivial_gcd(&(x + T::one()), n) {
                return Ok(FactorResult::split(n, g));
            }
        }
    }
    let mut exhausted = false;
    if let Some(k_max) = config.lift_max {
        if n.is_odd() && n >= &T::from_small(5) {
            let mut multiple = d.clone();
            for k in 0..=k_max {
                if k > 0 {
                    match multiple.checked_mul(&T::from_small(2)) {
                        Some(m) => multiple = m,
                        None => break,
                    }
                }
                match miller_factor(n, &multiple, rng, config.miller_witnesses) {
                    Ok(FactorResult::Factors(f1, f2)) => return Ok(FactorResult::Factors(f1, f2)),
                    Ok(FactorResult::Failure(_)) => exhausted = true,
                    Err(Error::BadExponent { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }
    if exhausted {
        return Ok(FactorResult::Failure(FailureReason::MillerExhausted));
    }
    sfa_postprocess(n, a, d)
}

/// Whether `n` has at least two distinct prime factors. Cheap classical
/// screening used before handing `n` to the randomized loops.
pub fn is_screened_composite<T: Natural>(n: &T) -> bool {
    n > &T::from_small(5) && !is_prime(n) && !crate::numtheory::is_prime_power(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numtheory::{factorize, lambda_factorization};
    use crate::primes::make_safe_semiprime;
    use crate::qofa::{task_rng, OracleMode, QofaOutcome, SimulatedQofa};

    /// Oracle that always answers with a fixed divisor.
    struct FixedDivisor(u64, u64);

    impl Qofa<u64> for FixedDivisor {
        fn query(&mut self, a: &u64) -> Result<QofaOutcome<u64>> {
            self.1 += 1;
            Ok(QofaOutcome {
                a: *a,
                n: 0,
                r: self.0,
                t: 1,
                d: self.0,
            })
        }
        fn calls(&self) -> u64 {
            self.1
        }
    }

    #[test]
    fn phi_recovery_examples() {
        assert_eq!(factor_semiprime_from_phi(&35u64, &24), FactorResult::Factors(5, 7));
        assert_eq!(factor_semiprime_from_phi(&15u64, &8), FactorResult::Factors(3, 5));
        assert_eq!(
            factor_semiprime_from_phi(&49u64, &42),
            FactorResult::Failure(FailureReason::NotApplicable)
        );
        assert_eq!(factor_semiprime_from_phi(&6u64, &2), FactorResult::Factors(2, 3));
        assert_eq!(
            factor_semiprime_from_phi(&35u64, &0),
            FactorResult::Failure(FailureReason::NotApplicable)
        );
        // close to the top of the u64 range, where sum^2 overflows 64 bits
        let (p, q) = (4_294_967_291u64, 4_294_967_279u64);
        assert_eq!(
            factor_semiprime_from_phi(&(p * q), &((p - 1) * (q - 1))),
            FactorResult::Factors(q, p)
        );
    }

    #[test]
    fn sfa_postprocess_examples() {
        assert_eq!(sfa_postprocess(&253u64, &2, &110).unwrap(), FactorResult::Factors(11, 23));
        assert_eq!(
            sfa_postprocess(&253u64, &2, &55).unwrap(),
            FactorResult::Failure(FailureReason::OddOrderDeadEnd)
        );
        assert_eq!(
            sfa_postprocess(&253u64, &252, &2).unwrap(),
            FactorResult::Failure(FailureReason::MinusOneRoot)
        );
        assert!(matches!(sfa_postprocess(&253u64, &11, &10), Err(Error::NotCoprime { .. })));
        // a^(d/2) = 1: d is not the order, both gcds trivial
        assert_eq!(
            sfa_postprocess(&253u64, &4, &110).unwrap(),
            FactorResult::Failure(FailureReason::TrivialGcd)
        );
    }

    #[test]
    fn sfa_run_perfect_oracle() {
        let mut rng = task_rng(3, 0);
        let mut oracle = SimulatedQofa::new(&factorize(253), OracleMode::Perfect).unwrap();
        let run = sfa_run(&253u64, &mut oracle, &mut rng, 100).unwrap();
        assert_eq!(run.result, FactorResult::Factors(11, 23));
        assert!(run.qofa_calls <= run.iterations);
    }

    #[test]
    fn sfa_run_lucky_gcd_uses_no_calls() {
        // find a seed whose first base shares a factor with 253
        let seed = (0..10_000u64)
            .find(|&s| {
                let a = u64::uniform_below(&mut task_rng(s, 0), &251) + 2;
                a.is_multiple_of(11) || a.is_multiple_of(23)
            })
            .unwrap();
        let mut oracle = FixedDivisor(110, 0);
        let run = sfa_run(&253u64, &mut oracle, &mut task_rng(seed, 0), 5).unwrap();
        assert_eq!(run.result, FactorResult::Factors(11, 23));
        assert_eq!((run.qofa_calls, run.iterations), (0, 1));
    }

    #[test]
    fn sfa_run_budget() {
        // odd answers never help; only a lucky base can end the run early
        let mut oracle = FixedDivisor(55, 0);
        match sfa_run(&253u64, &mut oracle, &mut task_rng(1, 0), 3) {
            Err(Error::IterationBudgetExceeded { iterations: 3, last, .. }) => {
                assert_eq!(last, Some(FailureReason::OddOrderDeadEnd))
            }
            Ok(run) => assert!(run.result.is_success()),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn safe_semiprime_examples() {
        let mut oracle = FixedDivisor(110, 0);
        assert_eq!(factor_safe_semiprime(&35u64, &mut oracle).unwrap(), FactorResult::Factors(5, 7));
        assert_eq!(oracle.calls(), 0);
        assert_eq!(factor_safe_semiprime(&253u64, &mut oracle).unwrap(), FactorResult::Factors(11, 23));
        assert_eq!(oracle.calls(), 1);
        assert_eq!(
            factor_safe_semiprime_from_divisor(&253u64, &5).unwrap(),
            FactorResult::Factors(11, 23)
        );
        assert_eq!(
            factor_safe_semiprime_from_divisor(&253u64, &1).unwrap(),
            FactorResult::Failure(FailureReason::BadQofaDivisor)
        );
        assert_eq!(
            factor_safe_semiprime_from_divisor(&253u64, &2).unwrap(),
            FactorResult::Failure(FailureReason::BadQofaDivisor)
        );
        assert!(matches!(
            factor_safe_semiprime(&254u64, &mut oracle),
            Err(Error::NotOdd(_))
        ));
        assert_eq!(
            factor_safe_semiprime(&5u64, &mut oracle).unwrap(),
            FactorResult::Failure(FailureReason::Composite5BranchNotApplicable)
        );
    }

    #[test]
    fn safe_semiprime_rejects_other_inputs() {
        // 21 = 3 * 7: d = 6 gives p = 7, but 3 is not a safe prime above 5
        for d in [1u64, 2, 3, 6] {
            assert!(!factor_safe_semiprime_from_divisor(&21u64, &d).unwrap().is_success());
        }
        // 7 * 13: a 2 q branch that does not divide
        assert_eq!(
            factor_safe_semiprime_from_divisor(&91u64, &12).unwrap(),
            FactorResult::Failure(FailureReason::NotApplicable)
        );
    }

    #[test]
    fn order_class_examples() {
        let ss = make_safe_semiprime(11u64, 23).unwrap();
        assert_eq!(order_of_two_class(&ss).unwrap(), OrderClass::TwoQ1Q2);
        let ss = make_safe_semiprime(7u64, 23).unwrap();
        assert_eq!(order_of_two_class(&ss).unwrap(), OrderClass::Q1Q2);
        let ss = make_safe_semiprime(11u64, 47).unwrap();
        let r = crate::numtheory::multiplicative_order_bruteforce(2, 517).unwrap();
        let expected = if r == 5 * 23 { OrderClass::Q1Q2 } else { OrderClass::TwoQ1Q2 };
        assert_eq!(order_of_two_class(&ss).unwrap(), expected);
    }

    #[test]
    fn failure_probability_examples() {
        let ss = make_safe_semiprime(11u64, 23).unwrap();
        assert_eq!(qofa_failure_probability(&ss).unwrap(), ratio(1, 55));
        assert_eq!(qofa_failure_probability_enumerated(&ss).unwrap(), ratio(1, 55));
        let ss = make_safe_semiprime(7u64, 11).unwrap();
        assert_eq!(qofa_failure_probability(&ss).unwrap(), ratio(1, 15));
        assert_eq!(qofa_failure_probability_enumerated(&ss).unwrap(), ratio(1, 15));
    }

    #[test]
    fn miller_examples() {
        assert_eq!(
            miller_factor_with_witnesses(&221u64, &48, [2]).unwrap(),
            FactorResult::Factors(13, 17)
        );
        assert_eq!(
            miller_factor_with_witnesses(&15u64, &4, [2]).unwrap(),
            FactorResult::Factors(3, 5)
        );
        assert_eq!(
            miller_factor_with_witnesses(&35u64, &12, [5]).unwrap(),
            FactorResult::Factors(5, 7)
        );
        assert!(matches!(
            miller_factor_with_witnesses(&221u64, &7, [2]),
            Err(Error::BadExponent { .. })
        ));
        let mut rng = task_rng(11, 0);
        assert_eq!(miller_factor(&253u64, &110, &mut rng, 40).unwrap(), FactorResult::Factors(11, 23));
        // a lone witness of -1 carries no information
        assert_eq!(
            miller_factor_with_witnesses(&253u64, &110, [252]).unwrap(),
            FactorResult::Failure(FailureReason::MillerExhausted)
        );
    }

    #[test]
    fn improved_examples() {
        let mut rng = task_rng(5, 0);
        let cfg = ImprovedConfig::default();
        assert_eq!(
            improved_postprocess(&45u64, &2, &12, &cfg, &mut rng).unwrap(),
            FactorResult::Factors(3, 15)
        );
        assert_eq!(
            improved_postprocess(&217u64, &2, &15, &ImprovedConfig::cheap(), &mut rng).unwrap(),
            FactorResult::Factors(7, 31)
        );
        assert_eq!(
            sfa_postprocess(&217u64, &2, &15).unwrap(),
            FactorResult::Failure(FailureReason::OddOrderDeadEnd)
        );
        // d = 55 = lambda(253) / 2 shares the factor 11 with N
        assert_eq!(
            improved_postprocess(&253u64, &2, &55, &ImprovedConfig::cheap(), &mut rng).unwrap(),
            FactorResult::Factors(11, 23)
        );
        // 553 = 7 * 79, lambda = 78, ord(2) = 39: only the lifting step helps
        assert_eq!(
            improved_postprocess(&553u64, &2, &39, &ImprovedConfig::cheap(), &mut rng).unwrap(),
            FactorResult::Failure(FailureReason::OddOrderDeadEnd)
        );
        assert_eq!(
            improved_postprocess(&553u64, &2, &39, &cfg, &mut rng).unwrap(),
            FactorResult::Factors(7, 79)
        );
    }

    #[test]
    fn improved_run_factors_composites() {
        for n in [91u64, 105, 221, 1001, 3127] {
            let lambda = lambda_factorization(&factorize(n)).unwrap();
            let mut oracle = SimulatedQofa::with_rng(n, lambda, task_rng(9, n));
            let run = improved_run(&n, &mut oracle, &mut task_rng(10, n), 50, &ImprovedConfig::default())
                .unwrap();
            let (a, b) = run.result.factors().unwrap();
            assert_eq!(a * b, n);
        }
    }

    #[test]
    fn big_safe_semiprime() {
        // safe primes near 2^100 and 2^99 + 2^97
        let p1: BigUint = "1267650600228229401496703192987".parse().unwrap();
        let p2: BigUint = "792281625142643375935439498399".parse().unwrap();
        let ss = make_safe_semiprime(p1, p2).unwrap();
        let lambda = lambda_factorization(&ss.factorization()).unwrap();
        assert_eq!(lambda, ss.lambda_factorization());
        let mut oracle =
            SimulatedQofa::with_lambda(ss.n().clone(), lambda.clone(), OracleMode::Perfect).unwrap();
        let res = factor_safe_semiprime(ss.n(), &mut oracle).unwrap();
        assert_eq!(res, FactorResult::Factors(ss.p1().clone(), ss.p2().clone()));
        let mut sampled =
            SimulatedQofa::with_lambda(ss.n().clone(), lambda, OracleMode::Sampled { seed: 1 }).unwrap();
        for _ in 0..5 {
            assert!(factor_safe_semiprime(ss.n(), &mut sampled).unwrap().is_success());
        }
        let q1q2 = ss.q1() * ss.q2();
        assert_eq!(
            qofa_failure_probability(&ss).unwrap(),
            crate::rational::big_ratio(&BigUint::one(), &q1q2)
        );
    }
}
