//! Exact rational helpers shared by the oracle model and the sweeps.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

/// Serializes an exact probability as `{"num": .., "den": ..}` plus a float
/// convenience field.
pub fn rational_json(q: &BigRational) -> serde_json::Value {
    serde_json::json!({
        "num": q.numer().to_string(),
        "den": q.denom().to_string(),
        "float": rational_to_f64(q),
    })
}

/// Nearest-ish `f64`; exact enough for display.
pub fn rational_to_f64(q: &BigRational) -> f64 {
    let num = q.numer();
    let den = q.denom();
    match (num.to_f64(), den.to_f64()) {
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() => a / b,
        _ => {
            // scale both down to avoid infinities
            let shift = den.bits().saturating_sub(900);
            let a = (num >> shift).to_f64().unwrap_or(f64::NAN);
            let b = (den >> shift).to_f64().unwrap_or(f64::NAN);
            a / b
        }
    }
}

/// `num/den` as an exact rational.
pub fn ratio(num: u64, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn big_ratio(num: &BigUint, den: &BigUint) -> BigRational {
    BigRational::new(BigInt::from(num.clone()), BigInt::from(den.clone()))
}

/// Sum of exact rationals by pairwise reduction. The reduction tree only
/// depends on the input length, so the result is the same however the
/// levels are scheduled; balanced operands also keep big denominators out of
/// most additions. Levels run on the current rayon pool.
pub fn tree_sum(mut terms: Vec<BigRational>) -> BigRational {
    if terms.is_empty() {
        return BigRational::zero();
    }
    while terms.len() > 1 {
        terms = terms
            .par_chunks(2)
            .map(|pair| match pair {
                [a, b] => a + b,
                [a] => a.clone(),
                _ => unreachable!(),
            })
            .collect();
    }
    terms.pop().unwrap_or_else(BigRational::zero)
}
