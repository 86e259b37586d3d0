//! Census and sweep harness: order census of `(Z/NZ)*`, single-call success
//! probabilities over all safe semiprimes below a bound, and the comparison
//! of plain and improved post-processing over a range of odd composites.
//!
//! Every sweep is deterministic for a given configuration. Per-`N` work is
//! spread over a rayon pool, results are collected in `N` order, and exact
//! aggregates are reduced with [`tree_sum`] so the worker count never shows
//! up in the output.

use std::collections::BTreeMap;
use std::io::Write;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factoring::{
    improved_postprocess, is_screened_composite, qofa_failure_probability, sfa_postprocess,
    FactorResult, FailureReason, ImprovedConfig,
};
use crate::numtheory::{
    factorize, is_prime, lambda_factorization, multiplicative_order, Factorization, Natural,
    BRUTE_FORCE_BOUND,
};
use crate::primes::{enumerate_safe_semiprimes, SafeSemiprime};
use crate::qofa::{qofa_distribution_factored, qofa_sample, task_rng};
use crate::rational::{rational_json, rational_to_f64, ratio, tree_sum};

/// Largest `hi` accepted by [`composite_sweep`].
pub const COMPOSITE_SWEEP_CAP: u64 = 1 << 40;

/// Smallest `lo` accepted by [`composite_sweep`].
pub const COMPOSITE_SWEEP_MIN: u64 = 10;

/// Numbers handled per parallel batch in [`composite_sweep`]; the record log
/// is flushed after each batch.
pub const SWEEP_CHUNK: u64 = 1 << 16;

/// Outcome key used for successes in outcome maps.
pub const SUCCESS: &str = "success";

/// Number of units of a given order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderCount {
    pub order: u64,
    pub count: u64,
}

/// Observed and predicted number of units of a given order modulo a safe
/// semiprime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusRow {
    pub order: u64,
    pub count: u64,
    pub predicted: u64,
}

/// Counts `ord_N(a)` for every unit `a` modulo `n`, one row per divisor of
/// `lambda(n)` in increasing order (rows may be zero).
pub fn order_census(n: u64, lambda_fact: &Factorization<u64>) -> Result<Vec<OrderCount>> {
    if n > BRUTE_FORCE_BOUND {
        return Err(Error::BoundExceeded {
            bound: BRUTE_FORCE_BOUND,
        });
    }
    if n.is_even() {
        return Err(Error::NotOdd(n.to_string()));
    }
    let mut counts: BTreeMap<u64, u64> = lambda_fact
        .divisors()?
        .into_iter()
        .map(|d| (d, 0))
        .collect();
    if n == 1 {
        return Err(Error::InvalidArgument("census needs N > 1".into()));
    }
    for a in 1..n {
        if a.gcd(&n) != 1 {
            continue;
        }
        let r = multiplicative_order(&a, &n, lambda_fact)?;
        *counts.entry(r).or_insert(0) += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(order, count)| OrderCount { order, count })
        .collect())
}

/// Closed-form census of a safe semiprime, from `(Z/NZ)* = C_{2 q1} x C_{2 q2}`.
pub fn predicted_census(ss: &SafeSemiprime<u64>) -> Vec<OrderCount> {
    let (q1, q2) = (*ss.q1(), *ss.q2());
    let mut rows = vec![
        OrderCount { order: 1, count: 1 },
        OrderCount { order: 2, count: 3 },
        OrderCount { order: q1, count: q1 - 1 },
        OrderCount { order: q2, count: q2 - 1 },
        OrderCount { order: 2 * q1, count: 3 * (q1 - 1) },
        OrderCount { order: 2 * q2, count: 3 * (q2 - 1) },
        OrderCount { order: q1 * q2, count: (q1 - 1) * (q2 - 1) },
        OrderCount { order: 2 * q1 * q2, count: 3 * (q1 - 1) * (q2 - 1) },
    ];
    rows.sort_by_key(|r| r.order);
    rows
}

/// Enumerated census next to the closed form.
pub fn safe_semiprime_census(ss: &SafeSemiprime<u64>) -> Result<Vec<CensusRow>> {
    let observed = order_census(*ss.n(), &ss.lambda_factorization())?;
    let predicted = predicted_census(ss);
    if observed.len() != predicted.len() {
        return Err(Error::OrderInvariant(format!(
            "census of {} has {} rows, expected {}",
            ss.n(),
            observed.len(),
            predicted.len()
        )));
    }
    Ok(observed
        .iter()
        .zip(&predicted)
        .map(|(o, p)| CensusRow {
            order: o.order,
            count: o.count,
            predicted: if o.order == p.order { p.count } else { 0 },
        })
        .collect())
}

/// How the base `a` is chosen in the safe-semiprime sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseChoice {
    /// `a = 2`.
    Fixed2,
    /// `a` uniform over the units modulo `N`.
    UniformRandom,
}

impl BaseChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaseChoice::Fixed2 => "fixed2",
            BaseChoice::UniformRandom => "uniform-random",
        }
    }
}

/// Exact enumeration or Monte Carlo.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMode {
    Exact,
    /// `trials` oracle calls per `N`.
    Sampled { trials: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafeSweepConfig {
    pub prime_bound: u64,
    pub base: BaseChoice,
    pub mode: SweepMode,
    pub seed: u64,
    pub workers: usize,
}

/// Single-call SFA success probability over a universe.
#[derive(Clone, Debug, PartialEq)]
pub enum Probability {
    Exact(BigRational),
    Estimate {
        successes: u64,
        trials: u64,
        mean: f64,
        stderr: f64,
    },
}

impl Probability {
    pub fn as_f64(&self) -> f64 {
        match self {
            Probability::Exact(q) => rational_to_f64(q),
            Probability::Estimate { mean, .. } => *mean,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Probability::Exact(q) => rational_json(q),
            Probability::Estimate {
                successes,
                trials,
                mean,
                stderr,
            } => serde_json::json!({
                "successes": successes,
                "trials": trials,
                "mean": mean,
                "stderr": stderr,
            }),
        }
    }
}

/// Aggregate of [`safe_semiprime_sweep`].
#[derive(Clone, Debug, PartialEq)]
pub struct SafeSweepReport {
    pub config: SafeSweepConfig,
    pub universe_size: u64,
    /// SFA success probability of one call, averaged over the universe.
    pub sfa_success: Probability,
    /// Average probability mass of each outcome (`"success"` or a failure
    /// reason); sums to 1.
    pub outcome_mass: BTreeMap<String, BigRational>,
    /// Same with the oracle always returning the true order.
    pub perfect_oracle_success: BigRational,
    /// Perfect-oracle success with `a = 2` when `p1` and `p2` are drawn
    /// independently from the safe primes, so `p1 = p2` happens (and fails)
    /// with probability `1/n`. At most 1/2 by AM-GM; `Fixed2` only.
    pub perfect_oracle_independent: Option<BigRational>,
    /// Exact single-call success of the safe-semiprime algorithm.
    pub safe_strategy_success: BigRational,
    /// Mean of `1 - 1/(q1 q2)`.
    pub safe_strategy_predicted: BigRational,
    /// Number of `N` where the safe-semiprime algorithm does not beat SFA;
    /// exact mode only.
    pub safe_strategy_not_better: Option<u64>,
}

impl SafeSweepReport {
    pub fn to_json(&self) -> serde_json::Value {
        let mass: serde_json::Map<String, serde_json::Value> = self
            .outcome_mass
            .iter()
            .map(|(k, v)| (k.clone(), rational_json(v)))
            .collect();
        let (mode, trials) = match self.config.mode {
            SweepMode::Exact => ("exact", None),
            SweepMode::Sampled { trials } => ("sampled", Some(trials)),
        };
        serde_json::json!({
            "prime_bound": self.config.prime_bound,
            "base": self.config.base.as_str(),
            "mode": mode,
            "trials": trials,
            "seed": self.config.seed,
            "universe_size": self.universe_size,
            "sfa_success": self.sfa_success.to_json(),
            "outcome_mass": mass,
            "perfect_oracle_success": rational_json(&self.perfect_oracle_success),
            "perfect_oracle_independent": opt_json(self.perfect_oracle_independent.clone()),
            "safe_strategy_success": rational_json(&self.safe_strategy_success),
            "safe_strategy_predicted": rational_json(&self.safe_strategy_predicted),
            "safe_strategy_not_better": self.safe_strategy_not_better,
        })
    }
}

fn outcome_key(result: &FactorResult<u64>) -> &'static str {
    match result {
        FactorResult::Factors(..) => SUCCESS,
        FactorResult::Failure(reason) => reason.as_str(),
    }
}

/// `a^(d/2)` modulo one prime factor of a squarefree `N`.
#[derive(Clone, Copy, PartialEq, Eq)]
enum HalfPower {
    One,
    MinusOne,
    Other,
}

fn half_power(order_mod_p: u64, d: u64) -> HalfPower {
    if (d / 2).is_multiple_of(order_mod_p) {
        HalfPower::One
    } else if d.is_multiple_of(order_mod_p) {
        // a^(d/2) has order 2 in a cyclic group
        HalfPower::MinusOne
    } else {
        HalfPower::Other
    }
}

/// What [`sfa_postprocess`] reports for `N = p1 p2` given the orders of `a`
/// modulo `p1` and `p2`.
fn sfa_outcome_from_orders(o1: u64, o2: u64, d: u64) -> &'static str {
    use HalfPower::*;
    if d % 2 == 1 {
        return FailureReason::OddOrderDeadEnd.as_str();
    }
    match (half_power(o1, d), half_power(o2, d)) {
        (MinusOne, MinusOne) => FailureReason::MinusOneRoot.as_str(),
        (One, One) | (Other, Other) => FailureReason::TrivialGcd.as_str(),
        _ => SUCCESS,
    }
}

fn add_mass(acc: &mut BTreeMap<&'static str, BigRational>, key: &'static str, p: BigRational) {
    *acc.entry(key).or_insert_with(BigRational::zero) += p;
}

/// Exact outcome distribution of one SFA call with `a = 2` on `ss`;
/// `perfect` replaces the oracle by `d = r`.
pub fn sfa_outcomes_fixed2(
    ss: &SafeSemiprime<u64>,
    perfect: bool,
) -> Result<BTreeMap<&'static str, BigRational>> {
    let n = *ss.n();
    let r = multiplicative_order(&2, &n, &ss.lambda_factorization())?;
    let mut acc = BTreeMap::new();
    if perfect {
        add_mass(&mut acc, outcome_key(&sfa_postprocess(&n, &2, &r)?), BigRational::one());
        return Ok(acc);
    }
    for (d, p) in qofa_distribution_factored(&factorize(r))? {
        add_mass(&mut acc, outcome_key(&sfa_postprocess(&n, &2, &d)?), p);
    }
    Ok(acc)
}

/// Exact outcome distribution of one SFA call with `a` uniform over the
/// units of `ss`.
///
/// Units are grouped by their orders `(o1, o2)` modulo `(p1, p2)`; there are
/// `phi(o)` residues of order `o` modulo each prime, the order modulo `N` is
/// `lcm(o1, o2)`, and the SFA outcome depends on `a` only through `(o1, o2)`.
pub fn sfa_outcomes_uniform_base(
    ss: &SafeSemiprime<u64>,
    perfect: bool,
) -> Result<BTreeMap<&'static str, BigRational>> {
    let (q1, q2) = (*ss.q1(), *ss.q2());
    let classes = |q: u64| [(1u64, 1u64), (2, 1), (q, q - 1), (2 * q, q - 1)];
    let phi_n = BigInt::from(ss.phi());
    let mut acc = BTreeMap::new();
    for (o1, c1) in classes(q1) {
        for (o2, c2) in classes(q2) {
            let weight = BigRational::new(BigInt::from(c1) * BigInt::from(c2), phi_n.clone());
            let r = o1.lcm(&o2);
            if perfect {
                add_mass(&mut acc, sfa_outcome_from_orders(o1, o2, r), weight);
                continue;
            }
            for (d, p) in qofa_distribution_factored(&factorize(r))? {
                add_mass(&mut acc, sfa_outcome_from_orders(o1, o2, d), weight.clone() * p);
            }
        }
    }
    Ok(acc)
}

/// Same distribution by enumerating every unit `a` and every multiplier `t`.
/// Test oracle for [`sfa_outcomes_uniform_base`]; small `N` only.
pub fn sfa_outcomes_uniform_base_enumerated(
    ss: &SafeSemiprime<u64>,
) -> Result<BTreeMap<&'static str, BigRational>> {
    let n = *ss.n();
    let lambda = ss.lambda_factorization();
    let phi = ss.phi();
    let mut counts: BTreeMap<&'static str, BigRational> = BTreeMap::new();
    for a in 1..n {
        if a.gcd(&n) != 1 {
            continue;
        }
        let r = multiplicative_order(&a, &n, &lambda)?;
        let mut per_a: BTreeMap<&'static str, u64> = BTreeMap::new();
        for t in 1..=r {
            let d = r / t.gcd(&r);
            *per_a.entry(outcome_key(&sfa_postprocess(&n, &a, &d)?)).or_insert(0) += 1;
        }
        for (k, c) in per_a {
            add_mass(&mut counts, k, ratio(c, r * phi));
        }
    }
    Ok(counts)
}

fn uniform_unit<R: RngCore>(n: u64, rng: &mut R) -> u64 {
    loop {
        let a = u64::uniform_below(rng, &(n - 1)) + 1;
        if a.gcd(&n) == 1 {
            return a;
        }
    }
}

struct SafeRecord {
    outcome_mass: BTreeMap<&'static str, BigRational>,
    sampled: BTreeMap<&'static str, u64>,
    perfect_success: BigRational,
    safe_strategy_success: BigRational,
    safe_strategy_predicted: BigRational,
    safe_strategy_better: bool,
}

fn safe_record(ss: &SafeSemiprime<u64>, config: &SafeSweepConfig, index: u64) -> Result<SafeRecord> {
    let outcomes = |perfect| match config.base {
        BaseChoice::Fixed2 => sfa_outcomes_fixed2(ss, perfect),
        BaseChoice::UniformRandom => sfa_outcomes_uniform_base(ss, perfect),
    };
    let success_of =
        |m: &BTreeMap<&'static str, BigRational>| m.get(SUCCESS).cloned().unwrap_or_default();
    let perfect_success = success_of(&outcomes(true)?);
    let safe_strategy_success = BigRational::one() - qofa_failure_probability(ss)?;
    let safe_strategy_predicted = BigRational::one() - ratio(1, ss.q1() * ss.q2());

    let (outcome_mass, sampled) = match config.mode {
        SweepMode::Exact => (outcomes(false)?, BTreeMap::new()),
        SweepMode::Sampled { trials } => {
            let n = *ss.n();
            let lambda = ss.lambda_factorization();
            let mut rng = task_rng(config.seed, index);
            let mut counts = BTreeMap::new();
            for _ in 0..trials {
                let a = match config.base {
                    BaseChoice::Fixed2 => 2,
                    BaseChoice::UniformRandom => uniform_unit(n, &mut rng),
                };
                let r = multiplicative_order(&a, &n, &lambda)?;
                let d = qofa_sample(&a, &n, &r, &mut rng).d;
                *counts.entry(outcome_key(&sfa_postprocess(&n, &a, &d)?)).or_insert(0) += 1;
            }
            (BTreeMap::new(), counts)
        }
    };
    let safe_strategy_better = safe_strategy_success > success_of(&outcome_mass);
    Ok(SafeRecord {
        outcome_mass,
        sampled,
        perfect_success,
        safe_strategy_success,
        safe_strategy_predicted,
        safe_strategy_better,
    })
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::InvalidArgument("workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

fn mean(terms: Vec<BigRational>, count: u64) -> BigRational {
    if count == 0 {
        return BigRational::zero();
    }
    tree_sum(terms) / BigRational::from_integer(BigInt::from(count))
}

/// Single-call success probabilities over every safe semiprime built from
/// safe primes in `(5, prime_bound]`.
pub fn safe_semiprime_sweep(config: &SafeSweepConfig) -> Result<SafeSweepReport> {
    let pairs = enumerate_safe_semiprimes(config.prime_bound)?;
    let primes = pairs.safe_primes().to_vec();
    let universe: Vec<SafeSemiprime<u64>> = pairs.collect();
    build_pool(config.workers)?.install(|| safe_sweep_on(config, &primes, &universe))
}

/// Perfect-oracle SFA with `a = 2` on `p^2`.
fn fixed2_square_succeeds(p: u64) -> Result<bool> {
    let n = p * p;
    let lambda = Factorization::from_unsorted(vec![(2, 1), ((p - 1) / 2, 1), (p, 1)])?;
    let r = multiplicative_order(&2, &n, &lambda)?;
    Ok(sfa_postprocess(&n, &2, &r)?.is_success())
}

fn safe_sweep_on(
    config: &SafeSweepConfig,
    primes: &[u64],
    universe: &[SafeSemiprime<u64>],
) -> Result<SafeSweepReport> {
    let records: Vec<SafeRecord> = universe
        .par_iter()
        .enumerate()
        .map(|(i, ss)| safe_record(ss, config, i as u64))
        .collect::<Result<_>>()?;
    let size = records.len() as u64;

    let mut keys: Vec<&'static str> = Vec::new();
    for r in &records {
        keys.extend(r.outcome_mass.keys().chain(r.sampled.keys()));
    }
    keys.sort_unstable();
    keys.dedup();

    let (sfa_success, outcome_mass) = match config.mode {
        SweepMode::Exact => {
            let mass: BTreeMap<String, BigRational> = keys
                .iter()
                .map(|k| {
                    let terms = records
                        .iter()
                        .map(|r| r.outcome_mass.get(k).cloned().unwrap_or_default())
                        .collect();
                    (k.to_string(), mean(terms, size))
                })
                .collect();
            let p = mass.get(SUCCESS).cloned().unwrap_or_default();
            (Probability::Exact(p), mass)
        }
        SweepMode::Sampled { trials } => {
            let total = size * trials;
            let mut mass = BTreeMap::new();
            let mut successes = 0;
            for k in &keys {
                let c: u64 = records.iter().filter_map(|r| r.sampled.get(k)).sum();
                if *k == SUCCESS {
                    successes = c;
                }
                mass.insert(k.to_string(), if total == 0 { BigRational::zero() } else { ratio(c, total) });
            }
            let p = if total == 0 { 0.0 } else { successes as f64 / total as f64 };
            let stderr = if total == 0 { 0.0 } else { (p * (1.0 - p) / total as f64).sqrt() };
            let est = Probability::Estimate {
                successes,
                trials: total,
                mean: p,
                stderr,
            };
            (est, mass)
        }
    };

    let perfect_oracle_independent = match config.base {
        BaseChoice::Fixed2 if !primes.is_empty() => {
            let off_diagonal: u64 = records.iter().filter(|r| r.perfect_success.is_one()).count() as u64;
            let diagonal = primes
                .par_iter()
                .map(|&p| fixed2_square_succeeds(p))
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .filter(|&ok| ok)
                .count() as u64;
            let k = primes.len() as u64;
            Some(ratio(2 * off_diagonal + diagonal, k * k))
        }
        _ => None,
    };

    let collect = |f: fn(&SafeRecord) -> &BigRational| {
        mean(records.iter().map(|r| f(r).clone()).collect(), size)
    };
    Ok(SafeSweepReport {
        config: config.clone(),
        universe_size: size,
        sfa_success,
        outcome_mass,
        perfect_oracle_success: collect(|r| &r.perfect_success),
        perfect_oracle_independent,
        safe_strategy_success: collect(|r| &r.safe_strategy_success),
        safe_strategy_predicted: collect(|r| &r.safe_strategy_predicted),
        safe_strategy_not_better: match config.mode {
            SweepMode::Exact => Some(records.iter().filter(|r| !r.safe_strategy_better).count() as u64),
            SweepMode::Sampled { .. } => None,
        },
    })
}

/// Post-processing strategies compared by [`composite_sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Standard SFA post-processing.
    Sfa,
    /// `gcd(d, N)` and small-prime roots, no Miller.
    Cheap,
    /// Cheap steps followed by lifting `d` by powers of 2 into Miller.
    Improved,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Sfa, Strategy::Cheap, Strategy::Improved];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Sfa => "sfa",
            Strategy::Cheap => "cheap",
            Strategy::Improved => "improved",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeSweepConfig {
    pub lo: u64,
    pub hi: u64,
    pub seed: u64,
    pub workers: usize,
    pub improved: ImprovedConfig,
}

impl CompositeSweepConfig {
    pub fn new(lo: u64, hi: u64, seed: u64, workers: usize) -> Self {
        Self {
            lo,
            hi,
            seed,
            workers,
            improved: ImprovedConfig::default(),
        }
    }
}

/// Per-`N` result of [`composite_sweep`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompositeRecord {
    pub n: u64,
    /// `ord_N(2)`, which is also the oracle answer `d`.
    pub order: u64,
    pub lambda: u64,
    /// `k` with `order * 2^k = lambda`, if any.
    pub lambda_power: Option<u32>,
    /// Outcomes in [`Strategy::ALL`] order.
    pub outcomes: [FactorResult<u64>; 3],
}

impl CompositeRecord {
    pub fn outcome(&self, s: Strategy) -> &FactorResult<u64> {
        &self.outcomes[s as usize]
    }

    /// Whether `order = 2^-k lambda` for some `k >= 1`.
    pub fn is_lambda_power(&self) -> bool {
        matches!(self.lambda_power, Some(k) if k >= 1)
    }
}

/// Header of the record log.
pub const RECORD_HEADER: &str = "N,strategy,outcome,reason,order,d";

/// Writes the log lines of one record.
pub fn write_record<W: Write + ?Sized>(out: &mut W, rec: &CompositeRecord) -> std::io::Result<()> {
    for s in Strategy::ALL {
        let (outcome, reason) = match rec.outcome(s) {
            FactorResult::Factors(..) => ("success", ""),
            FactorResult::Failure(r) => ("failure", r.as_str()),
        };
        writeln!(out, "{},{},{},{},{},{}", rec.n, s.as_str(), outcome, reason, rec.order, rec.order)?;
    }
    Ok(())
}

/// Successes and failures of one strategy.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepStats {
    pub universe_size: u64,
    pub successes: u64,
    pub failures_by_reason: BTreeMap<FailureReason, u64>,
}

impl SweepStats {
    pub fn failures(&self) -> u64 {
        self.failures_by_reason.values().sum()
    }

    pub fn success_fraction(&self) -> BigRational {
        ratio(self.successes, self.universe_size.max(1))
    }

    pub fn failure_fraction(&self) -> BigRational {
        ratio(self.failures(), self.universe_size.max(1))
    }

    fn record(&mut self, result: &FactorResult<u64>) {
        self.universe_size += 1;
        match result {
            FactorResult::Factors(..) => self.successes += 1,
            FactorResult::Failure(r) => *self.failures_by_reason.entry(*r).or_insert(0) += 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let reasons: serde_json::Map<String, serde_json::Value> = self
            .failures_by_reason
            .iter()
            .map(|(r, c)| (r.as_str().to_string(), (*c).into()))
            .collect();
        serde_json::json!({
            "universe_size": self.universe_size,
            "successes": self.successes,
            "failures": self.failures(),
            "failures_by_reason": reasons,
            "success_fraction": rational_json(&self.success_fraction()),
            "failure_fraction": rational_json(&self.failure_fraction()),
        })
    }
}

/// Aggregate of [`composite_sweep`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CompositeSweepReport {
    pub lo: u64,
    pub hi: u64,
    pub seed: u64,
    /// In [`Strategy::ALL`] order.
    pub stats: [SweepStats; 3],
    /// Cheap failures with `order = 2^-k lambda`, `k >= 1`.
    pub cheap_failures_lambda_power: u64,
    /// Cheap failures with `order = 2^-k lambda`, `k >= 0`.
    pub cheap_failures_lambda_multiple: u64,
    /// Plain SFA failures with `order = 2^-k lambda`, `k >= 1`.
    pub sfa_failures_lambda_power: u64,
    /// Cheap failures that the improved strategy factors.
    pub miller_rescued: u64,
    /// `N` factored by plain SFA but not by the improved strategy.
    pub dominance_violations: u64,
    /// Composites in range left out of the universe (even or prime powers);
    /// classical screening factors them without an oracle call.
    pub screened_composites: u64,
}

fn opt_ratio(num: u64, den: u64) -> Option<BigRational> {
    (den > 0).then(|| ratio(num, den))
}

fn opt_json(q: Option<BigRational>) -> serde_json::Value {
    q.as_ref().map(rational_json).unwrap_or(serde_json::Value::Null)
}

impl CompositeSweepReport {
    pub fn stats(&self, s: Strategy) -> &SweepStats {
        &self.stats[s as usize]
    }

    pub fn universe_size(&self) -> u64 {
        self.stats[0].universe_size
    }

    /// Failures of `s` over every composite in range, counting screened
    /// numbers as factored.
    pub fn failure_fraction_all_composites(&self, s: Strategy) -> BigRational {
        let all = self.universe_size() + self.screened_composites;
        ratio(self.stats(s).failures(), all.max(1))
    }

    /// Plain failures divided by cheap-strategy failures.
    pub fn cheap_improvement_factor(&self) -> Option<BigRational> {
        opt_ratio(self.stats(Strategy::Sfa).failures(), self.stats(Strategy::Cheap).failures())
    }

    /// Plain failures divided by improved-strategy failures.
    pub fn improved_improvement_factor(&self) -> Option<BigRational> {
        opt_ratio(self.stats(Strategy::Sfa).failures(), self.stats(Strategy::Improved).failures())
    }

    /// Among cheap-strategy failures, the fraction with `order = 2^-k lambda`,
    /// `k >= 1`.
    pub fn residual_lambda_power_fraction(&self) -> Option<BigRational> {
        opt_ratio(self.cheap_failures_lambda_power, self.stats(Strategy::Cheap).failures())
    }

    /// Same with `k = 0` allowed.
    pub fn residual_lambda_multiple_fraction(&self) -> Option<BigRational> {
        opt_ratio(self.cheap_failures_lambda_multiple, self.stats(Strategy::Cheap).failures())
    }

    /// Among plain SFA failures, the fraction with `order = 2^-k lambda`,
    /// `k >= 1`.
    pub fn sfa_residual_lambda_power_fraction(&self) -> Option<BigRational> {
        opt_ratio(self.sfa_failures_lambda_power, self.stats(Strategy::Sfa).failures())
    }

    /// Among cheap-strategy failures, the fraction the improved strategy
    /// factors.
    pub fn miller_rescue_fraction(&self) -> Option<BigRational> {
        opt_ratio(self.miller_rescued, self.stats(Strategy::Cheap).failures())
    }

    fn absorb(&mut self, rec: &CompositeRecord) {
        for s in Strategy::ALL {
            self.stats[s as usize].record(rec.outcome(s));
        }
        let sfa_ok = rec.outcome(Strategy::Sfa).is_success();
        let cheap_ok = rec.outcome(Strategy::Cheap).is_success();
        let improved_ok = rec.outcome(Strategy::Improved).is_success();
        if !cheap_ok {
            if rec.is_lambda_power() {
                self.cheap_failures_lambda_power += 1;
            }
            if rec.lambda_power.is_some() {
                self.cheap_failures_lambda_multiple += 1;
            }
            if improved_ok {
                self.miller_rescued += 1;
            }
        }
        if !sfa_ok && rec.is_lambda_power() {
            self.sfa_failures_lambda_power += 1;
        }
        if sfa_ok && !improved_ok {
            self.dominance_violations += 1;
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let stats: serde_json::Map<String, serde_json::Value> = Strategy::ALL
            .iter()
            .map(|s| {
                let mut v = self.stats(*s).to_json();
                v["failure_fraction_all_composites"] =
                    rational_json(&self.failure_fraction_all_composites(*s));
                (s.as_str().to_string(), v)
            })
            .collect();
        serde_json::json!({
            "lo": self.lo,
            "hi": self.hi,
            "seed": self.seed,
            "universe_size": self.universe_size(),
            "screened_composites": self.screened_composites,
            "strategies": stats,
            "cheap_improvement_factor": opt_json(self.cheap_improvement_factor()),
            "improved_improvement_factor": opt_json(self.improved_improvement_factor()),
            "residual_lambda_power_fraction": opt_json(self.residual_lambda_power_fraction()),
            "residual_lambda_multiple_fraction": opt_json(self.residual_lambda_multiple_fraction()),
            "sfa_residual_lambda_power_fraction": opt_json(self.sfa_residual_lambda_power_fraction()),
            "miller_rescue_fraction": opt_json(self.miller_rescue_fraction()),
            "dominance_violations": self.dominance_violations,
        })
    }
}

/// Whether `n` belongs to the composite-sweep universe: odd, composite and
/// not a prime power.
pub fn in_composite_universe(n: u64) -> bool {
    n.is_odd() && is_screened_composite(&n)
}

/// Models one correct oracle call with `a = 2` on `n` and post-processes it
/// with every strategy. `n` must be in the universe.
pub fn composite_record(n: u64, seed: u64, improved: &ImprovedConfig) -> Result<CompositeRecord> {
    let lambda_fact = lambda_factorization(&factorize(n))?;
    let lambda = lambda_fact.value()?;
    let order = multiplicative_order(&2, &n, &lambda_fact)?;
    let q = lambda / order;
    let lambda_power = q.is_power_of_two().then(|| q.trailing_zeros());
    let sfa = sfa_postprocess(&n, &2, &order)?;
    let mut rng = task_rng(seed, n);
    let cheap = improved_postprocess(&n, &2, &order, &ImprovedConfig::cheap(), &mut rng)?;
    let full = improved_postprocess(&n, &2, &order, improved, &mut rng)?;
    Ok(CompositeRecord {
        n,
        order,
        lambda,
        lambda_power,
        outcomes: [sfa, cheap, full],
    })
}

/// Plain versus improved post-processing over every odd composite non-prime
/// power in `[lo, hi]`, one correct oracle call with `a = 2` each. Records
/// go to `log` (if given) in increasing `N`, flushed after each batch.
pub fn composite_sweep(
    config: &CompositeSweepConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<CompositeSweepReport> {
    if config.lo < COMPOSITE_SWEEP_MIN {
        return Err(Error::InvalidArgument(format!(
            "lo must be at least {COMPOSITE_SWEEP_MIN}"
        )));
    }
    if config.hi > COMPOSITE_SWEEP_CAP {
        return Err(Error::BoundTooLarge {
            bound: config.hi,
            cap: COMPOSITE_SWEEP_CAP,
        });
    }
    let pool = build_pool(config.workers)?;
    let mut report = CompositeSweepReport {
        lo: config.lo,
        hi: config.hi,
        seed: config.seed,
        ..Default::default()
    };
    if let Some(out) = log.as_deref_mut() {
        writeln!(out, "{RECORD_HEADER}")?;
    }
    let mut start = config.lo;
    while start <= config.hi {
        let end = start.saturating_add(SWEEP_CHUNK - 1).min(config.hi);
        let (records, screened) = pool.install(|| {
            let records = (start..=end)
                .into_par_iter()
                .filter(|&n| in_composite_universe(n))
                .map(|n| composite_record(n, config.seed, &config.improved))
                .collect::<Result<Vec<_>>>();
            let screened = (start..=end)
                .into_par_iter()
                .filter(|&n| !in_composite_universe(n) && !is_prime(&n))
                .count() as u64;
            records.map(|r| (r, screened))
        })?;
        report.screened_composites += screened;
        for rec in &records {
            report.absorb(rec);
        }
        if let Some(out) = log.as_deref_mut() {
            let mut buf = Vec::with_capacity(records.len() * 96);
            for rec in &records {
                write_record(&mut buf, rec)?;
            }
            out.write_all(&buf)?;
            out.flush()?;
        }
        if end == u64::MAX {
            break;
        }
        start = end + 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::make_safe_semiprime;

    fn ss(p1: u64, p2: u64) -> SafeSemiprime<u64> {
        make_safe_semiprime(p1, p2).unwrap()
    }

    fn counts(rows: &[OrderCount]) -> Vec<(u64, u64)> {
        rows.iter().map(|r| (r.order, r.count)).collect()
    }

    #[test]
    fn census_253() {
        let s = ss(11, 23);
        let rows = order_census(253, &s.lambda_factorization()).unwrap();
        assert_eq!(
            counts(&rows),
            vec![(1, 1), (2, 3), (5, 4), (10, 12), (11, 10), (22, 30), (55, 40), (110, 120)]
        );
        assert_eq!(rows, predicted_census(&s));
        assert_eq!(rows.iter().map(|r| r.count).sum::<u64>(), 220);
        for row in safe_semiprime_census(&s).unwrap() {
            assert_eq!(row.count, row.predicted);
        }
    }

    #[test]
    fn census_15() {
        let lambda = lambda_factorization(&factorize(15)).unwrap();
        let rows = order_census(15, &lambda).unwrap();
        // lambda(15) = 4: 1 -> 1; 4, 11, 14 -> 2; 2, 7, 8, 13 -> 4
        assert_eq!(counts(&rows), vec![(1, 1), (2, 3), (4, 4)]);
    }

    #[test]
    fn census_rejects() {
        let lambda = lambda_factorization(&factorize(1_000_003 * 3)).unwrap();
        assert!(matches!(
            order_census(1_000_003 * 3, &lambda),
            Err(Error::BoundExceeded { .. })
        ));
        assert!(matches!(order_census(22, &Factorization::one()), Err(Error::NotOdd(_))));
    }

    #[test]
    fn order_two_square_roots_are_large() {
        // besides N - 1 the square roots of 1 exceed sqrt(N + 1)
        for (p1, p2) in [(7, 11), (11, 23), (23, 47), (59, 83)] {
            let n = p1 * p2;
            let roots: Vec<u64> = (2..n - 1).filter(|&a| a * a % n == 1).collect();
            assert_eq!(roots.len(), 2);
            assert!(roots.iter().all(|&a| a * a > n + 1));
        }
    }

    #[test]
    fn predicted_census_sums_to_phi() {
        for (p1, p2) in [(7, 11), (23, 47), (107, 167), (1019, 2039)] {
            let s = ss(p1, p2);
            let rows = predicted_census(&s);
            assert_eq!(rows.len(), 8);
            assert_eq!(rows.iter().map(|r| r.count).sum::<u64>(), s.phi());
            assert_eq!(rows.iter().find(|r| r.order == 2).unwrap().count, 3);
        }
    }

    fn total(m: &BTreeMap<&'static str, BigRational>) -> BigRational {
        m.values().cloned().sum()
    }

    #[test]
    fn fixed2_253_by_enumeration() {
        let s = ss(11, 23);
        let exact = sfa_outcomes_fixed2(&s, false).unwrap();
        let r = multiplicative_order(&2, &253, &s.lambda_factorization()).unwrap();
        assert_eq!(r, 110);
        let mut wins = 0;
        for t in 1..=r {
            if sfa_postprocess(&253, &2, &(r / t.gcd(&r))).unwrap().is_success() {
                wins += 1;
            }
        }
        assert_eq!(exact[SUCCESS], ratio(wins, r));
        assert_eq!(total(&exact), BigRational::one());
    }

    #[test]
    fn uniform_base_classes_match_enumeration() {
        for (p1, p2) in [(7, 11), (7, 23), (11, 23), (23, 47), (47, 59)] {
            let s = ss(p1, p2);
            let classes = sfa_outcomes_uniform_base(&s, false).unwrap();
            let brute = sfa_outcomes_uniform_base_enumerated(&s).unwrap();
            assert_eq!(classes, brute, "N = {}", s.n());
            assert_eq!(total(&classes), BigRational::one());
        }
    }

    #[test]
    fn uniform_base_perfect_oracle_by_enumeration() {
        let s = ss(23, 47);
        let n = *s.n();
        let lambda = s.lambda_factorization();
        let mut wins = 0;
        for a in (1..n).filter(|a| a.gcd(&n) == 1) {
            let r = multiplicative_order(&a, &n, &lambda).unwrap();
            if sfa_postprocess(&n, &a, &r).unwrap().is_success() {
                wins += 1;
            }
        }
        let perfect = sfa_outcomes_uniform_base(&s, true).unwrap();
        assert_eq!(perfect[SUCCESS], ratio(wins, s.phi()));
    }

    fn safe_config(mode: SweepMode, base: BaseChoice, workers: usize) -> SafeSweepConfig {
        SafeSweepConfig {
            prime_bound: 300,
            base,
            mode,
            seed: 11,
            workers,
        }
    }

    #[test]
    fn uniform_base_perfect_oracle_is_one_half() {
        for (p1, p2) in [(7, 11), (11, 23), (23, 47), (47, 59), (1019, 2039)] {
            let s = ss(p1, p2);
            let perfect = sfa_outcomes_uniform_base(&s, true).unwrap();
            assert_eq!(perfect[SUCCESS], ratio(1, 2));
            let imperfect = sfa_outcomes_uniform_base(&s, false).unwrap();
            assert!(imperfect[SUCCESS] < ratio(1, 2));
        }
    }

    #[test]
    fn fixed2_depends_on_residues_mod_8() {
        // 2 is a square mod p iff p = 7 (mod 8), so ord_N(2) is odd when
        // both primes are 7 mod 8 and 2^(r/2) = -1 when both are 3 mod 8
        for (p1, p2) in [(7, 23), (11, 59), (7, 11), (23, 59), (47, 83), (167, 179)] {
            let s = ss(p1, p2);
            let mixed = p1 % 8 != p2 % 8;
            let perfect = sfa_outcomes_fixed2(&s, true).unwrap();
            assert_eq!(perfect.contains_key(SUCCESS), mixed, "{p1} {p2}");
            let q = s.q1() * s.q2();
            // d = 2 q1 q2 needs mixed residues; d = 2 q_i needs 2 to be a
            // non-square mod p_i
            let expected = match (p1 % 8, p2 % 8) {
                (7, 7) => BigRational::zero(),
                (3, 3) => ratio(s.q1() + s.q2() - 2, 2 * q),
                _ => ratio(q - 1, 2 * q),
            };
            let exact = sfa_outcomes_fixed2(&s, false).unwrap();
            assert_eq!(exact.get(SUCCESS).cloned().unwrap_or_default(), expected);
        }
    }

    #[test]
    fn safe_sweep_exact() {
        for base in [BaseChoice::Fixed2, BaseChoice::UniformRandom] {
            let report = safe_semiprime_sweep(&safe_config(SweepMode::Exact, base, 2)).unwrap();
            // safe primes 7, 11, 23, 47, 59, 83, 107, 167, 179, 227, 263
            assert_eq!(report.universe_size, 55);
            assert_eq!(report.safe_strategy_success, report.safe_strategy_predicted);
            assert_eq!(report.safe_strategy_not_better, Some(0));
            let total: BigRational = report.outcome_mass.values().cloned().sum();
            assert_eq!(total, BigRational::one());
            let Probability::Exact(p) = &report.sfa_success else {
                panic!("expected an exact value");
            };
            assert!(p < &report.perfect_oracle_success);
        }
        let uniform =
            safe_semiprime_sweep(&safe_config(SweepMode::Exact, BaseChoice::UniformRandom, 1)).unwrap();
        assert_eq!(uniform.perfect_oracle_success, ratio(1, 2));
        // 3 mod 8: 11, 59, 83, 107, 179; 7 mod 8: 7, 23, 47, 167, 227, 263
        let fixed = safe_semiprime_sweep(&safe_config(SweepMode::Exact, BaseChoice::Fixed2, 1)).unwrap();
        assert_eq!(fixed.perfect_oracle_success, ratio(30, 55));
        // 2 * 5 * 6 mixed ordered pairs out of 11^2; squares never split
        assert_eq!(fixed.perfect_oracle_independent, Some(ratio(60, 121)));
        assert_eq!(uniform.perfect_oracle_independent, None);
    }

    #[test]
    fn safe_sweep_sampled_is_reproducible() {
        let cfg = |w| safe_config(SweepMode::Sampled { trials: 50 }, BaseChoice::UniformRandom, w);
        let a = safe_semiprime_sweep(&cfg(1)).unwrap();
        let mut b = safe_semiprime_sweep(&cfg(4)).unwrap();
        b.config.workers = 1;
        assert_eq!(a, b);
        let exact = safe_semiprime_sweep(&safe_config(SweepMode::Exact, BaseChoice::UniformRandom, 1))
            .unwrap();
        let Probability::Estimate { mean, stderr, trials, .. } = a.sfa_success else {
            panic!("expected an estimate");
        };
        assert_eq!(trials, 55 * 50);
        assert!((mean - exact.sfa_success.as_f64()).abs() < 5.0 * stderr);
    }

    #[test]
    fn composite_45_cheap_step_one() {
        assert!(in_composite_universe(45));
        let rec = composite_record(45, 0, &ImprovedConfig::default()).unwrap();
        assert_eq!(rec.order, 12);
        assert_eq!(rec.lambda, 12);
        assert_eq!(rec.lambda_power, Some(0));
        assert!(rec.outcomes.iter().all(|o| o.is_success()));
    }

    #[test]
    fn composite_universe() {
        for n in [9, 25, 27, 121, 343, 15, 2, 7, 100] {
            let expected = n == 15;
            assert_eq!(in_composite_universe(n), expected, "{n}");
        }
    }

    #[test]
    fn composite_sweep_small() {
        let cfg = CompositeSweepConfig::new(10, 5000, 3, 3);
        let mut log = Vec::new();
        let report = composite_sweep(&cfg, Some(&mut log)).unwrap();
        let universe = (10..=5000).filter(|&n| in_composite_universe(n)).count() as u64;
        assert_eq!(report.universe_size(), universe);
        for s in Strategy::ALL {
            let st = report.stats(s);
            assert_eq!(st.successes + st.failures(), universe);
        }
        assert_eq!(report.dominance_violations, 0);
        let text = String::from_utf8(log).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(RECORD_HEADER));
        assert_eq!(lines.count() as u64, 3 * universe);

        let serial = composite_sweep(&CompositeSweepConfig::new(10, 5000, 3, 1), None).unwrap();
        assert_eq!(serial, report);
    }

    #[test]
    fn composite_sweep_rejects() {
        assert!(matches!(
            composite_sweep(&CompositeSweepConfig::new(5, 100, 0, 1), None),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            composite_sweep(&CompositeSweepConfig::new(10, COMPOSITE_SWEEP_CAP + 1, 0, 1), None),
            Err(Error::BoundTooLarge { .. })
        ));
    }
}
