//! Prime and safe-prime enumeration, and validated safe semiprimes.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numtheory::{is_prime, Factorization, Natural};

/// Largest bound accepted by [`sieve_primes`]; the output list alone is
/// about 1.6 GB at this size.
pub const PRIME_LIST_CAP: u64 = 1 << 32;

/// Largest bound accepted by [`safe_primes`].
pub const SAFE_PRIME_CAP: u64 = 100_000_000_000;

/// Bounds above this use the segmented sieve.
pub const PLAIN_SIEVE_LIMIT: u64 = 10_000_000;

/// Odd numbers per segment of the segmented sieve.
const SEGMENT_LEN: u64 = 1 << 18;

/// Cache file magic, followed by the covered bound and the ascending safe
/// primes, all little-endian `u64`.
pub const CACHE_MAGIC: &[u8; 8] = b"SAFEPRM1";

/// File name used inside a cache directory.
pub const CACHE_FILE_NAME: &str = "safe_primes.bin";

fn check_cap(bound: u64, cap: u64) -> Result<()> {
    if bound > cap {
        Err(Error::BoundTooLarge { bound, cap })
    } else {
        Ok(())
    }
}

/// Sieve of Eratosthenes over odd numbers; flag `i` stands for `2i + 1`.
fn odd_composite_flags(bound: u64) -> Vec<bool> {
    let len = (bound / 2 + 1) as usize;
    let mut composite = vec![false; len];
    if len > 0 {
        composite[0] = true; // 1
    }
    let mut p = 3u64;
    while p * p <= bound {
        if !composite[(p / 2) as usize] {
            let mut m = p * p;
            while m <= bound {
                composite[(m / 2) as usize] = true;
                m += 2 * p;
            }
        }
        p += 2;
    }
    composite
}

/// Primes `<= bound` from a single full-size sieve.
pub fn sieve_primes_plain(bound: u64) -> Result<Vec<u64>> {
    check_cap(bound, PRIME_LIST_CAP)?;
    if bound < 2 {
        return Ok(Vec::new());
    }
    let composite = odd_composite_flags(bound);
    let mut primes = vec![2];
    primes.extend(
        composite
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &c)| !c)
            .map(|(i, _)| 2 * i as u64 + 1)
            .filter(|&p| p <= bound),
    );
    Ok(primes)
}

/// Primality flags for every integer in `[lo, hi)`, sieved with `base`,
/// which must contain every prime up to `sqrt(hi)`.
fn segment_flags(lo: u64, hi: u64, base: &[u64]) -> Vec<bool> {
    let mut prime = vec![true; (hi - lo) as usize];
    for n in lo..hi.min(2) {
        prime[(n - lo) as usize] = false;
    }
    for &p in base {
        if p * p >= hi {
            break;
        }
        let first = (p * p).max(lo.div_ceil(p) * p);
        let mut m = first;
        while m < hi {
            prime[(m - lo) as usize] = false;
            m += p;
        }
    }
    prime
}

/// Iterator over the primes in `[lo, hi]`, sieving one segment at a time
/// so that memory stays around `O(sqrt(hi))`.
pub struct SegmentedPrimes {
    base: Vec<u64>,
    next_lo: u64,
    end: u64,
    buffer: Vec<u64>,
    pos: usize,
}

impl SegmentedPrimes {
    pub fn new(lo: u64, hi: u64) -> Self {
        let root = (hi as f64).sqrt() as u64 + 2;
        let base = sieve_primes_plain(root).expect("sqrt bound is within the cap");
        Self {
            base,
            next_lo: lo,
            end: hi.saturating_add(1),
            buffer: Vec::new(),
            pos: 0,
        }
    }

    fn refill(&mut self) -> bool {
        while self.next_lo < self.end {
            let lo = self.next_lo;
            let hi = lo.saturating_add(2 * SEGMENT_LEN).min(self.end);
            self.next_lo = hi;
            let flags = segment_flags(lo, hi, &self.base);
            self.buffer.clear();
            self.buffer.extend(
                flags
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p)
                    .map(|(i, _)| lo + i as u64),
            );
            self.pos = 0;
            if !self.buffer.is_empty() {
                return true;
            }
        }
        false
    }
}

impl Iterator for SegmentedPrimes {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        if self.pos == self.buffer.len() && !self.refill() {
            return None;
        }
        let p = self.buffer[self.pos];
        self.pos += 1;
        Some(p)
    }
}

/// Primes `<= bound` from the segmented sieve.
pub fn sieve_primes_segmented(bound: u64) -> Result<Vec<u64>> {
    check_cap(bound, PRIME_LIST_CAP)?;
    Ok(SegmentedPrimes::new(0, bound).collect())
}

/// Ascending primes `<= bound`.
pub fn sieve_primes(bound: u64) -> Result<Vec<u64>> {
    if bound > PLAIN_SIEVE_LIMIT {
        sieve_primes_segmented(bound)
    } else {
        sieve_primes_plain(bound)
    }
}

/// Ascending safe primes `p <= bound` (`p` and `(p - 1)/2` both prime).
pub fn safe_primes(bound: u64) -> Result<Vec<u64>> {
    check_cap(bound, SAFE_PRIME_CAP)?;
    if bound < 5 {
        return Ok(Vec::new());
    }
    if bound <= PLAIN_SIEVE_LIMIT {
        let composite = odd_composite_flags(bound);
        let is_prime_flag = |n: u64| n == 2 || (n % 2 == 1 && !composite[(n / 2) as usize]);
        return Ok((5..=bound)
            .step_by(2)
            .filter(|&p| is_prime_flag(p) && is_prime_flag((p - 1) / 2))
            .collect());
    }
    let root = (bound as f64).sqrt() as u64 + 2;
    let base = sieve_primes_plain(root)?;
    let mut out = Vec::new();
    let mut lo = 5u64;
    let end = bound + 1;
    while lo < end {
        let hi = (lo + 2 * SEGMENT_LEN).min(end);
        let flags = segment_flags(lo, hi, &base);
        let q_lo = (lo - 1) / 2;
        let q_hi = (hi - 1) / 2 + 1;
        let q_flags = segment_flags(q_lo, q_hi, &base);
        let mut p = lo | 1;
        while p < hi {
            if flags[(p - lo) as usize] {
                let q = (p - 1) / 2;
                if q_flags[(q - q_lo) as usize] {
                    out.push(p);
                }
            }
            p += 2;
        }
        lo = hi;
    }
    Ok(out)
}

/// A product `N = p1 * p2` of two distinct safe primes `p_i = 2 q_i + 1`
/// with `q1, q2 > 2`, normalized so that `p1 < p2`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SafeSemiprime<T = u64> {
    n: T,
    p1: T,
    p2: T,
    q1: T,
    q2: T,
}

impl<T: Natural> SafeSemiprime<T> {
    pub fn n(&self) -> &T {
        &self.n
    }
    pub fn p1(&self) -> &T {
        &self.p1
    }
    pub fn p2(&self) -> &T {
        &self.p2
    }
    pub fn q1(&self) -> &T {
        &self.q1
    }
    pub fn q2(&self) -> &T {
        &self.q2
    }

    /// `phi(N) = 4 q1 q2`.
    pub fn phi(&self) -> T {
        T::from_small(4) * self.q1.clone() * self.q2.clone()
    }

    /// `lambda(N) = 2 q1 q2`.
    pub fn lambda(&self) -> T {
        T::from_small(2) * self.q1.clone() * self.q2.clone()
    }

    /// `{2, q1, q2}`; `q1 > 2` so the primes are in increasing order.
    pub fn lambda_factorization(&self) -> Factorization<T> {
        Factorization::from_trusted(vec![
            (T::from_small(2), 1),
            (self.q1.clone(), 1),
            (self.q2.clone(), 1),
        ])
    }

    pub fn factorization(&self) -> Factorization<T> {
        Factorization::from_trusted(vec![(self.p1.clone(), 1), (self.p2.clone(), 1)])
    }

    /// Constructs without validation; `p1 < p2` must already be distinct safe
    /// primes above 5.
    pub(crate) fn from_trusted(p1: T, p2: T) -> Self {
        let two = T::from_small(2);
        let q1 = (p1.clone() - T::one()) / two.clone();
        let q2 = (p2.clone() - T::one()) / two;
        Self {
            n: p1.clone() * p2.clone(),
            p1,
            p2,
            q1,
            q2,
        }
    }
}

/// Whether `p` is prime and `(p - 1)/2` is prime.
pub fn is_safe_prime<T: Natural>(p: &T) -> bool {
    p.is_odd() && is_prime(p) && is_prime(&((p.clone() - T::one()) / T::from_small(2)))
}

/// Validates `p1`, `p2` and builds the safe semiprime `p1 * p2`.
pub fn make_safe_semiprime<T: Natural>(p1: T, p2: T) -> Result<SafeSemiprime<T>> {
    if p1 == p2 {
        return Err(Error::Equal);
    }
    let (p1, p2) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
    let seven = T::from_small(7);
    for (position, p) in [(1, &p1), (2, &p2)] {
        if p < &seven {
            return Err(Error::TooSmall {
                value: p.to_string(),
            });
        }
        if !is_safe_prime(p) {
            return Err(Error::NotSafePrime {
                position,
                value: p.to_string(),
            });
        }
    }
    if p1.checked_mul(&p2).is_none() {
        return Err(Error::Overflow("safe semiprime"));
    }
    Ok(SafeSemiprime::from_trusted(p1, p2))
}

/// Every unordered pair of distinct safe primes from an ascending list, in
/// lexicographic `(p1, p2)` order.
#[derive(Clone, Debug)]
pub struct SafeSemiprimes {
    primes: Vec<u64>,
    i: usize,
    j: usize,
}

impl SafeSemiprimes {
    /// `primes` must be ascending safe primes; entries `<= 5` are dropped.
    pub fn from_safe_primes(mut primes: Vec<u64>) -> Self {
        primes.retain(|&p| p > 5);
        Self { primes, i: 0, j: 1 }
    }

    pub fn safe_primes(&self) -> &[u64] {
        &self.primes
    }

    /// Total number of pairs.
    pub fn pair_count(&self) -> u64 {
        let k = self.primes.len() as u64;
        k * k.saturating_sub(1) / 2
    }
}

impl Iterator for SafeSemiprimes {
    type Item = SafeSemiprime<u64>;

    fn next(&mut self) -> Option<Self::Item> {
        while self.i < self.primes.len() {
            if self.j < self.primes.len() {
                let ss = SafeSemiprime::from_trusted(self.primes[self.i], self.primes[self.j]);
                self.j += 1;
                return Some(ss);
            }
            self.i += 1;
            self.j = self.i + 1;
        }
        None
    }
}

/// All safe semiprimes built from safe primes in `(5, prime_bound]`.
pub fn enumerate_safe_semiprimes(prime_bound: u64) -> Result<SafeSemiprimes> {
    // products of two primes below 2^32 fit in u64
    check_cap(prime_bound, u32::MAX as u64)?;
    Ok(SafeSemiprimes::from_safe_primes(safe_primes(prime_bound)?))
}

/// Writes a safe-prime cache file covering `bound`.
pub fn write_safe_prime_cache(path: &Path, bound: u64, primes: &[u64]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut out = BufWriter::new(fs::File::create(&tmp)?);
        out.write_all(CACHE_MAGIC)?;
        out.write_all(&bound.to_le_bytes())?;
        for p in primes {
            out.write_all(&p.to_le_bytes())?;
        }
        out.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Reads a cache file, returning the covered bound and the primes.
pub fn read_safe_prime_cache(path: &Path) -> Result<(u64, Vec<u64>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..8] != CACHE_MAGIC {
        return Err(Error::BadCache("missing SAFEPRM1 header".into()));
    }
    if bytes.len() % 8 != 0 {
        return Err(Error::BadCache("truncated entry".into()));
    }
    let word = |chunk: &[u8]| u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
    let bound = word(&bytes[8..16]);
    let primes: Vec<u64> = bytes[16..].chunks_exact(8).map(word).collect();
    if primes.windows(2).any(|w| w[0] >= w[1]) || primes.last().is_some_and(|&p| p > bound) {
        return Err(Error::BadCache("entries not ascending within bound".into()));
    }
    Ok((bound, primes))
}

/// Safe primes `<= bound`, served from `dir/safe_primes.bin` when the cached
/// bound covers the request and regenerated (and rewritten) otherwise.
pub fn cached_safe_primes(dir: &Path, bound: u64) -> Result<Vec<u64>> {
    let path: PathBuf = dir.join(CACHE_FILE_NAME);
    if let Ok((cached_bound, mut primes)) = read_safe_prime_cache(&path) {
        if cached_bound >= bound {
            primes.retain(|&p| p <= bound);
            return Ok(primes);
        }
    }
    let primes = safe_primes(bound)?;
    fs::create_dir_all(dir)?;
    write_safe_prime_cache(&path, bound, &primes)?;
    Ok(primes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sieves() {
        assert_eq!(sieve_primes(10).unwrap(), vec![2, 3, 5, 7]);
        assert_eq!(sieve_primes(2).unwrap(), vec![2]);
        assert_eq!(sieve_primes_segmented(10).unwrap(), vec![2, 3, 5, 7]);
        assert_eq!(sieve_primes_segmented(2).unwrap(), vec![2]);
        assert!(sieve_primes(1).unwrap().is_empty());
        assert!(matches!(
            sieve_primes(PRIME_LIST_CAP + 1),
            Err(Error::BoundTooLarge { .. })
        ));
    }

    #[test]
    fn segmented_range_iterator() {
        let v: Vec<u64> = SegmentedPrimes::new(1_000_000, 1_000_100).collect();
        assert_eq!(v, vec![1_000_003, 1_000_033, 1_000_037, 1_000_039, 1_000_081, 1_000_099]);
    }

    #[test]
    fn safe_prime_examples() {
        assert_eq!(safe_primes(100).unwrap(), vec![5, 7, 11, 23, 47, 59, 83]);
        assert_eq!(safe_primes(6).unwrap(), vec![5]);
        assert!(safe_primes(4).unwrap().is_empty());
    }

    #[test]
    fn make_safe_semiprime_examples() {
        let ss = make_safe_semiprime(23u64, 11).unwrap();
        assert_eq!((*ss.n(), *ss.p1(), *ss.p2(), *ss.q1(), *ss.q2()), (253, 11, 23, 5, 11));
        assert_eq!(ss.phi(), 220);
        assert_eq!(ss.lambda(), 110);
        assert!(matches!(make_safe_semiprime(5u64, 7), Err(Error::TooSmall { .. })));
        assert!(matches!(make_safe_semiprime(3u64, 7), Err(Error::TooSmall { .. })));
        assert!(matches!(make_safe_semiprime(11u64, 11), Err(Error::Equal)));
        assert!(matches!(
            make_safe_semiprime(11u64, 13),
            Err(Error::NotSafePrime { position: 2, .. })
        ));
        assert!(make_safe_semiprime(u32::MAX as u64 * 4 + 3, 4_294_967_291u64 * 4 + 1).is_err());
    }

    #[test]
    fn enumeration_examples() {
        let pairs: Vec<(u64, u64)> = enumerate_safe_semiprimes(25)
            .unwrap()
            .map(|s| (*s.p1(), *s.p2()))
            .collect();
        assert_eq!(pairs, vec![(7, 11), (7, 23), (11, 23)]);
        assert_eq!(enumerate_safe_semiprimes(7).unwrap().count(), 0);
        let e = enumerate_safe_semiprimes(100).unwrap();
        assert_eq!(e.pair_count(), 15);
        assert_eq!(e.count(), 15);
    }

    #[test]
    fn cache_round_trip_and_regeneration() {
        let dir = tempfile::tempdir().unwrap();
        let small = cached_safe_primes(dir.path(), 100).unwrap();
        assert_eq!(small, safe_primes(100).unwrap());
        let (bound, stored) = read_safe_prime_cache(&dir.path().join(CACHE_FILE_NAME)).unwrap();
        assert_eq!((bound, stored.len()), (100, 7));
        // a smaller request is served from the cache
        assert_eq!(cached_safe_primes(dir.path(), 50).unwrap(), vec![5, 7, 11, 23, 47]);
        // a larger one regenerates it
        let larger = cached_safe_primes(dir.path(), 1000).unwrap();
        assert_eq!(larger, safe_primes(1000).unwrap());
        let (bound, _) = read_safe_prime_cache(&dir.path().join(CACHE_FILE_NAME)).unwrap();
        assert_eq!(bound, 1000);

        let raw = fs::read(dir.path().join(CACHE_FILE_NAME)).unwrap();
        assert_eq!(&raw[..8], b"SAFEPRM1");
        assert_eq!(u64::from_le_bytes(raw[16..24].try_into().unwrap()), 5);
    }

    #[test]
    fn corrupt_cache_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CACHE_FILE_NAME);
        fs::write(&path, b"NOTMAGIC\0\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(read_safe_prime_cache(&path), Err(Error::BadCache(_))));
        // unreadable caches are regenerated
        assert_eq!(cached_safe_primes(dir.path(), 30).unwrap(), vec![5, 7, 11, 23]);
    }
}
