//! Exact integer arithmetic: gcd/lcm, modular exponentiation, primality,
//! Euler's totient, Carmichael's lambda, multiplicative orders and integer
//! square roots.
//!
//! Everything is generic over [`Natural`], implemented for `u64` (the fast
//! path used by the sweeps, with `u128` intermediate products) and for
//! [`BigUint`] (used when factoring numbers above 2^64).

use std::fmt::{Debug, Display};
use std::hash::Hash;

use num_bigint::BigUint;
use num_integer::{Integer, Roots};
use num_traits::{CheckedAdd, CheckedMul, FromPrimitive, ToPrimitive, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default iteration budget for [`multiplicative_order_bruteforce`].
pub const BRUTE_FORCE_BOUND: u64 = 1_000_000;

/// Extra random Miller-Rabin rounds used by [`is_prime`] above 2^64.
pub const DEFAULT_MR_ROUNDS: u32 = 32;

/// Bases that make Miller-Rabin deterministic below 3.3 * 10^24.
const MR_BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Fixed seed for the witness stream of the probabilistic primality path, so
/// that primality answers above 2^64 are reproducible.
const MR_WITNESS_SEED: u64 = 0x6d69_6c6c_6572_7261;

/// A non-negative integer type the kernel can work with.
pub trait Natural:
    Integer
    + Roots
    + Clone
    + Hash
    + Debug
    + Display
    + FromPrimitive
    + ToPrimitive
    + CheckedMul
    + CheckedAdd
    + Send
    + Sync
    + 'static
{
    /// `self * rhs mod modulus`.
    fn mul_mod(&self, rhs: &Self, modulus: &Self) -> Self;

    /// `self ^ exp mod modulus`, for `modulus >= 1`.
    fn pow_mod(&self, exp: &Self, modulus: &Self) -> Self;

    /// Number of significant bits (0 for zero).
    fn bit_len(&self) -> u64;

    /// Number of trailing zero bits, `None` for zero.
    fn trailing_zero_bits(&self) -> Option<u64>;

    /// Uniform value in `[0, bound)` by rejection sampling; `bound > 0`.
    fn uniform_below<R: RngCore + ?Sized>(rng: &mut R, bound: &Self) -> Self;

    fn to_biguint(&self) -> BigUint;

    fn from_biguint(v: &BigUint) -> Option<Self>;

    /// Small constant conversion; every `Natural` holds all `u64` values.
    fn from_small(v: u64) -> Self {
        Self::from_u64(v).expect("every Natural represents u64 values")
    }
}

impl Natural for u64 {
    fn mul_mod(&self, rhs: &Self, modulus: &Self) -> Self {
        ((*self as u128 * *rhs as u128) % *modulus as u128) as u64
    }

    fn pow_mod(&self, exp: &Self, modulus: &Self) -> Self {
        let m = *modulus;
        if m == 1 {
            return 0;
        }
        let mut result = 1u64;
        let mut base = *self % m;
        let mut e = *exp;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul_mod(&base, &m);
            }
            base = base.mul_mod(&base, &m);
            e >>= 1;
        }
        result
    }

    fn bit_len(&self) -> u64 {
        (64 - self.leading_zeros()) as u64
    }

    fn trailing_zero_bits(&self) -> Option<u64> {
        (*self != 0).then(|| self.trailing_zeros() as u64)
    }

    fn uniform_below<R: RngCore + ?Sized>(rng: &mut R, bound: &Self) -> Self {
        assert!(*bound > 0, "empty sampling range");
        // Accept x < 2^64 - (2^64 mod bound): every residue then has the
        // same number of preimages.
        let rem = (u64::MAX % bound + 1) % bound;
        loop {
            let x = rng.next_u64();
            if x <= u64::MAX - rem {
                return x % bound;
            }
        }
    }

    fn to_biguint(&self) -> BigUint {
        BigUint::from(*self)
    }

    fn from_biguint(v: &BigUint) -> Option<Self> {
        v.to_u64()
    }
}

impl Natural for BigUint {
    fn mul_mod(&self, rhs: &Self, modulus: &Self) -> Self {
        (self * rhs) % modulus
    }

    fn pow_mod(&self, exp: &Self, modulus: &Self) -> Self {
        self.modpow(exp, modulus)
    }

    fn bit_len(&self) -> u64 {
        self.bits()
    }

    fn trailing_zero_bits(&self) -> Option<u64> {
        self.trailing_zeros()
    }

    fn uniform_below<R: RngCore + ?Sized>(rng: &mut R, bound: &Self) -> Self {
        assert!(!bound.is_zero(), "empty sampling range");
        let bits = (bound - 1u32).bits();
        if bits == 0 {
            return BigUint::zero();
        }
        let words = bits.div_ceil(32) as usize;
        let top_mask = if bits.is_multiple_of(32) {
            u32::MAX
        } else {
            (1u32 << (bits % 32)) - 1
        };
        let mut digits = vec![0u32; words];
        loop {
            for w in digits.iter_mut() {
                *w = rng.next_u32();
            }
            digits[words - 1] &= top_mask;
            let candidate = BigUint::new(digits.clone());
            if &candidate < bound {
                return candidate;
            }
        }
    }

    fn to_biguint(&self) -> BigUint {
        self.clone()
    }

    fn from_biguint(v: &BigUint) -> Option<Self> {
        Some(v.clone())
    }
}

pub fn gcd<T: Natural>(a: &T, b: &T) -> T {
    a.gcd(b)
}

/// Least common multiple; `Error::Overflow` if it does not fit in `T`.
pub fn lcm<T: Natural>(a: &T, b: &T) -> Result<T> {
    if a.is_zero() || b.is_zero() {
        return Ok(T::zero());
    }
    let g = a.gcd(b);
    (a.clone() / g)
        .checked_mul(b)
        .ok_or(Error::Overflow("lcm"))
}

/// `base ^ exp mod modulus`.
///
/// # Panics
///
/// If `modulus < 2`.
pub fn mod_pow<T: Natural>(base: &T, exp: &T, modulus: &T) -> T {
    assert!(modulus > &T::one(), "modulus must be at least 2");
    base.pow_mod(exp, modulus)
}

/// Floor square root and whether it is exact.
pub fn isqrt<T: Natural>(n: &T) -> (T, bool) {
    let root = n.sqrt();
    let exact = &(root.clone() * root.clone()) == n;
    (root, exact)
}

fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in MR_BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    if n < 41 * 41 {
        return true;
    }
    let (s, d) = split_two_power(&n);
    MR_BASES
        .iter()
        .all(|&a| strong_probable_prime(&n, &d, s, &a))
}

/// `n - 1 = 2^s * d` with `d` odd, for odd `n >= 3`.
fn split_two_power<T: Natural>(n: &T) -> (u64, T) {
    let n_minus_1 = n.clone() - T::one();
    let s = n_minus_1.trailing_zero_bits().unwrap_or(0);
    let mut d = n_minus_1;
    for _ in 0..s {
        d = d / T::from_small(2);
    }
    (s, d)
}

/// One Miller-Rabin round for odd `n` with `n - 1 = 2^s * d`.
fn strong_probable_prime<T: Natural>(n: &T, d: &T, s: u64, a: &T) -> bool {
    let a = a.clone() % n.clone();
    if a.is_zero() {
        return true;
    }
    let minus_one = n.clone() - T::one();
    let mut x = a.pow_mod(d, n);
    if x.is_one() || x == minus_one {
        return true;
    }
    for _ in 1..s {
        x = x.mul_mod(&x, n);
        if x == minus_one {
            return true;
        }
        if x.is_one() {
            return false;
        }
    }
    false
}

/// Exact primality test.
///
/// Below 2^64 this is Miller-Rabin with the first twelve prime bases, which
/// is deterministic. Above 2^64 the same bases are followed by
/// [`DEFAULT_MR_ROUNDS`] rounds with bases drawn from a fixed-seed stream,
/// see [`is_prime_with_rounds`].
pub fn is_prime<T: Natural>(n: &T) -> bool {
    is_prime_with_rounds(n, DEFAULT_MR_ROUNDS)
}

/// Primality with a configurable number of extra rounds above 2^64.
///
/// For inputs that do not fit in 64 bits a composite survives with
/// probability at most `4^-(12 + rounds)`. The witness stream has a fixed
/// seed, so the answer for a given `n` never changes between runs.
pub fn is_prime_with_rounds<T: Natural>(n: &T, rounds: u32) -> bool {
    if let Some(small) = n.to_u64() {
        return is_prime_u64(small);
    }
    for p in MR_BASES {
        if (n.clone() % T::from_small(p)).is_zero() {
            return false;
        }
    }
    let (s, d) = split_two_power(n);
    if !MR_BASES
        .iter()
        .all(|&a| strong_probable_prime(n, &d, s, &T::from_small(a)))
    {
        return false;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(MR_WITNESS_SEED);
    let span = n.clone() - T::from_small(3);
    (0..rounds).all(|_| {
        let a = T::uniform_below(&mut rng, &span) + T::from_small(2);
        strong_probable_prime(n, &d, s, &a)
    })
}

/// Prime factorization `{(p_i, e_i)}` with strictly increasing primes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Factorization<T = u64> {
    factors: Vec<(T, u32)>,
}

impl<T: Natural> Factorization<T> {
    /// Validates that primes are strictly increasing, prime, and carry
    /// exponents of at least one.
    pub fn new(factors: Vec<(T, u32)>) -> Result<Self> {
        for (i, (p, e)) in factors.iter().enumerate() {
            if *e == 0 {
                return Err(Error::InvalidFactorization(format!("zero exponent for {p}")));
            }
            if i > 0 && factors[i - 1].0 >= *p {
                return Err(Error::InvalidFactorization(
                    "primes must be strictly increasing".into(),
                ));
            }
            if !is_prime(p) {
                return Err(Error::InvalidFactorization(format!("{p} is not prime")));
            }
        }
        Ok(Self { factors })
    }

    /// Sorts, merges and validates an unordered list of prime powers.
    pub fn from_unsorted(mut factors: Vec<(T, u32)>) -> Result<Self> {
        factors.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(T, u32)> = Vec::with_capacity(factors.len());
        for (p, e) in factors {
            match merged.last_mut() {
                Some((q, f)) if *q == p => *f += e,
                _ => merged.push((p, e)),
            }
        }
        merged.retain(|(_, e)| *e > 0);
        Self::new(merged)
    }

    /// The factorization of 1.
    pub fn one() -> Self {
        Self { factors: Vec::new() }
    }

    /// Builds a factorization whose entries the caller already knows to be
    /// sorted distinct primes.
    pub(crate) fn from_trusted(factors: Vec<(T, u32)>) -> Self {
        debug_assert!(factors.windows(2).all(|w| w[0].0 < w[1].0));
        Self { factors }
    }

    pub fn entries(&self) -> &[(T, u32)] {
        &self.factors
    }

    pub fn primes(&self) -> impl Iterator<Item = &T> {
        self.factors.iter().map(|(p, _)| p)
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn exponent_of(&self, p: &T) -> u32 {
        self.factors
            .iter()
            .find(|(q, _)| q == p)
            .map_or(0, |(_, e)| *e)
    }

    /// The represented integer.
    pub fn value(&self) -> Result<T> {
        let mut acc = T::one();
        for (p, e) in &self.factors {
            for _ in 0..*e {
                acc = acc.checked_mul(p).ok_or(Error::Overflow("factorization value"))?;
            }
        }
        Ok(acc)
    }

    /// Merge keeping the larger exponent of each prime.
    pub fn lcm(&self, other: &Self) -> Self {
        self.merge(other, |a, b| a.max(b))
    }

    /// Merge adding exponents.
    pub fn mul(&self, other: &Self) -> Self {
        self.merge(other, |a, b| a + b)
    }

    fn merge(&self, other: &Self, combine: impl Fn(u32, u32) -> u32) -> Self {
        let mut out = Vec::with_capacity(self.factors.len() + other.factors.len());
        let (mut i, mut j) = (0, 0);
        while i < self.factors.len() || j < other.factors.len() {
            let take_left = j == other.factors.len()
                || (i < self.factors.len() && self.factors[i].0 < other.factors[j].0);
            let take_right = i == self.factors.len()
                || (j < other.factors.len() && other.factors[j].0 < self.factors[i].0);
            if take_left {
                out.push(self.factors[i].clone());
                i += 1;
            } else if take_right {
                out.push(other.factors[j].clone());
                j += 1;
            } else {
                let (p, a) = &self.factors[i];
                out.push((p.clone(), combine(*a, other.factors[j].1)));
                i += 1;
                j += 1;
            }
        }
        Self { factors: out }
    }

    /// All divisors in ascending order, each paired with its totient.
    pub fn divisors_with_phi(&self) -> Result<Vec<(T, T)>> {
        let mut acc = vec![(T::one(), T::one())];
        for (p, e) in &self.factors {
            let mut next = Vec::with_capacity(acc.len() * (*e as usize + 1));
            for (d, phi) in &acc {
                next.push((d.clone(), phi.clone()));
                let mut pk = T::one();
                for k in 1..=*e {
                    pk = pk.checked_mul(p).ok_or(Error::Overflow("divisors"))?;
                    let phi_pk = if k == 1 {
                        p.clone() - T::one()
                    } else {
                        (pk.clone() / p.clone()) * (p.clone() - T::one())
                    };
                    let dd = d.checked_mul(&pk).ok_or(Error::Overflow("divisors"))?;
                    next.push((dd, phi.clone() * phi_pk));
                }
            }
            acc = next;
        }
        acc.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(acc)
    }

    /// All divisors in ascending order.
    pub fn divisors(&self) -> Result<Vec<T>> {
        Ok(self.divisors_with_phi()?.into_iter().map(|(d, _)| d).collect())
    }
}

impl<T: Natural> Display for Factorization<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        for (i, (p, e)) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, " * ")?;
            }
            if *e == 1 {
                write!(f, "{p}")?;
            } else {
                write!(f, "{p}^{e}")?;
            }
        }
        Ok(())
    }
}

/// Euler's totient `prod p^(e-1) (p - 1)`.
pub fn euler_phi<T: Natural>(f: &Factorization<T>) -> T {
    f.entries().iter().fold(T::one(), |acc, (p, e)| {
        let mut term = p.clone() - T::one();
        for _ in 1..*e {
            term = term * p.clone();
        }
        acc * term
    })
}

/// Carmichael's lambda of a single prime power.
fn lambda_prime_power<T: Natural>(p: &T, e: u32) -> T {
    let two = T::from_small(2);
    if *p == two {
        return match e {
            1 => T::one(),
            2 => two,
            _ => num_traits::pow(two, (e - 2) as usize),
        };
    }
    let mut v = p.clone() - T::one();
    for _ in 1..e {
        v = v * p.clone();
    }
    v
}

/// Carmichael's lambda: the lcm of `lambda(p_i^e_i)`.
pub fn carmichael_lambda<T: Natural>(f: &Factorization<T>) -> T {
    f.entries().iter().fold(T::one(), |acc, (p, e)| {
        let l = lambda_prime_power(p, *e);
        // lambda(N) <= phi(N) <= N, so the lcm cannot overflow.
        let g = acc.gcd(&l);
        acc / g * l
    })
}

/// Factorization of `lambda(N)` from that of `N`.
///
/// `factor_p_minus_1` is asked for the factorization of `p - 1` for every
/// odd prime `p | N`.
pub fn carmichael_lambda_factorization<T, F>(
    f: &Factorization<T>,
    mut factor_p_minus_1: F,
) -> Result<Factorization<T>>
where
    T: Natural,
    F: FnMut(&T) -> Result<Factorization<T>>,
{
    let two = T::from_small(2);
    let mut acc = Factorization::one();
    for (p, e) in f.entries() {
        let component = if *p == two {
            match e {
                1 => Factorization::one(),
                2 => Factorization::from_trusted(vec![(two.clone(), 1)]),
                _ => Factorization::from_trusted(vec![(two.clone(), e - 2)]),
            }
        } else {
            let pm1 = factor_p_minus_1(&(p.clone() - T::one()))?;
            if *e > 1 {
                pm1.mul(&Factorization::from_trusted(vec![(p.clone(), e - 1)]))
            } else {
                pm1
            }
        };
        acc = acc.lcm(&component);
    }
    Ok(acc)
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

/// Exact multiplicative order of `a` modulo `n`.
///
/// Starts from `lambda(n)` (given factored) and strips prime factors while
/// the power stays 1. Fails with `BadExponent` if `a^lambda != 1`, which
/// means `lambda_fact` was not the factorization of a multiple of the order.
pub fn multiplicative_order<T: Natural>(
    a: &T,
    n: &T,
    lambda_fact: &Factorization<T>,
) -> Result<T> {
    let a = a.clone() % n.clone();
    require_coprime(&a, n)?;
    let lambda = lambda_fact.value()?;
    if !a.pow_mod(&lambda, n).is_one() {
        return Err(Error::BadExponent {
            n: n.to_string(),
            exponent: lambda.to_string(),
            witness: a.to_string(),
        });
    }
    let mut r = lambda;
    for (p, e) in lambda_fact.entries() {
        for _ in 0..*e {
            let candidate = r.clone() / p.clone();
            if a.pow_mod(&candidate, n).is_one() {
                r = candidate;
            } else {
                break;
            }
        }
    }
    Ok(r)
}

/// Order by successive multiplication, capped at [`BRUTE_FORCE_BOUND`]
/// steps. Test oracle for [`multiplicative_order`].
pub fn multiplicative_order_bruteforce(a: u64, n: u64) -> Result<u64> {
    multiplicative_order_bruteforce_with_bound(a, n, BRUTE_FORCE_BOUND)
}

pub fn multiplicative_order_bruteforce_with_bound(a: u64, n: u64, bound: u64) -> Result<u64> {
    assert!(n >= 2, "modulus must be at least 2");
    let a = a % n;
    require_coprime(&a, &n)?;
    let mut x = a;
    let mut r = 1u64;
    while x != 1 {
        if r >= bound {
            return Err(Error::BoundExceeded { bound });
        }
        x = x.mul_mod(&a, &n);
        r += 1;
    }
    Ok(r)
}

/// All divisors of `lambda(N)`: the orders an element modulo `N` can have.
pub fn possible_orders<T: Natural>(lambda_fact: &Factorization<T>) -> Result<Vec<T>> {
    lambda_fact.divisors()
}

/// `Some((b, k))` with `k >= 2` maximal if `n = b^k`.
pub fn perfect_power<T: Natural>(n: &T) -> Option<(T, u32)> {
    if n <= &T::one() {
        return None;
    }
    let bits = n.bit_len() as u32;
    (2..=bits).rev().find_map(|k| {
        let root = n.nth_root(k);
        (root > T::one() && &num_traits::pow(root.clone(), k as usize) == n).then_some((root, k))
    })
}

/// Whether `n` is `p^k` for a prime `p` and `k >= 1`.
pub fn is_prime_power<T: Natural>(n: &T) -> bool {
    match perfect_power(n) {
        Some((base, _)) => is_prime_power(&base),
        None => is_prime(n),
    }
}

/// Complete factorization of a 64-bit integer by trial division and
/// Pollard-Brent rho.
///
/// Used on the simulator side only: the oracle model needs `lambda(N)`
/// factored, and the harness factors the numbers it enumerates.
pub fn factorize(n: u64) -> Factorization<u64> {
    assert!(n >= 1, "cannot factor zero");
    let mut parts = Vec::new();
    let mut m = n;
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47] {
        if m.is_multiple_of(p) {
            let mut e = 0;
            while m.is_multiple_of(p) {
                m /= p;
                e += 1;
            }
            parts.push((p, e));
        }
    }
    let mut stack = vec![m];
    let mut large = Vec::new();
    while let Some(x) = stack.pop() {
        if x == 1 {
            continue;
        }
        if is_prime_u64(x) {
            large.push((x, 1));
            continue;
        }
        let d = pollard_brent(x);
        stack.push(d);
        stack.push(x / d);
    }
    parts.extend(large);
    Factorization::from_unsorted(parts).expect("factorization of a u64 is valid")
}

/// A nontrivial divisor of the odd composite `n` (no factor below 53).
fn pollard_brent(n: u64) -> u64 {
    if let Some((root, _)) = perfect_power(&n) {
        return root;
    }
    let mut c = 1u64;
    loop {
        let f = |x: u64| (x.mul_mod(&x, &n) + c) % n;
        let (mut x, mut y, mut ys) = (2u64, 2u64, 2u64);
        let mut q = 1u64;
        let mut g = 1u64;
        let mut r = 1u64;
        const BLOCK: u64 = 128;
        while g == 1 {
            x = y;
            for _ in 0..r {
                y = f(y);
            }
            let mut k = 0;
            while k < r && g == 1 {
                ys = y;
                for _ in 0..BLOCK.min(r - k) {
                    y = f(y);
                    q = q.mul_mod(&x.abs_diff(y), &n);
                }
                g = q.gcd(&n);
                k += BLOCK;
            }
            r *= 2;
        }
        if g == n {
            loop {
                ys = f(ys);
                g = x.abs_diff(ys).gcd(&n);
                if g > 1 {
                    break;
                }
            }
        }
        if g != n {
            return g;
        }
        c += 1;
    }
}

/// Factors `m` when it is 1, a prime, fits in 64 bits, or is such a number
/// times primes below 2^16. Builds `lambda(N)` for arbitrary-size `N` whose
/// prime factors have smooth-enough `p - 1`, in particular safe primes.
pub fn factorize_cofactor<T: Natural>(m: &T) -> Result<Factorization<T>> {
    if m.is_zero() {
        return Err(Error::InvalidArgument("cannot factor zero".into()));
    }
    if let Some(small) = m.to_u64() {
        let f = factorize(small);
        let entries = f
            .entries()
            .iter()
            .map(|(p, e)| (T::from_small(*p), *e))
            .collect();
        return Ok(Factorization::from_trusted(entries));
    }
    let mut rest = m.clone();
    let mut parts = Vec::new();
    let mut p = 2u64;
    while p < 1 << 16 {
        let pt = T::from_small(p);
        let mut e = 0;
        while (rest.clone() % pt.clone()).is_zero() {
            rest = rest / pt.clone();
            e += 1;
        }
        if e > 0 {
            parts.push((pt, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if !rest.is_one() {
        if let Some(small) = rest.to_u64() {
            for (q, e) in factorize(small).entries() {
                parts.push((T::from_small(*q), *e));
            }
        } else if is_prime(&rest) {
            parts.push((rest, 1));
        } else {
            return Err(Error::OracleUnavailable(format!(
                "cannot factor {m}: cofactor {rest} is composite and exceeds 64 bits"
            )));
        }
    }
    Factorization::from_unsorted(parts)
}

/// Factorization of `lambda(N)` given that of `N`, factoring each `p - 1`
/// with [`factorize_cofactor`].
pub fn lambda_factorization<T: Natural>(f: &Factorization<T>) -> Result<Factorization<T>> {
    carmichael_lambda_factorization(f, |pm1| factorize_cofactor(pm1))
}
