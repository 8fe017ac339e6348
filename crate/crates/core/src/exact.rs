//! Exact rational evaluation of the influence estimator.
//!
//! Empirical probabilities are ratios of integers, so the estimator is a
//! rational number. Evaluating it in [`BigRational`] lets identities such as
//! binary antisymmetry be checked with equality instead of a tolerance.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::influence::{DistributionTable, EmpiricalDistribution};
use crate::subsets::enumerate_subsets;

pub fn exact_probability(dist: &EmpiricalDistribution, group: usize) -> BigRational {
    let count = dist.counts().get(group).copied().unwrap_or(0);
    BigRational::new(BigInt::from(count), BigInt::from(dist.samples()))
}

/// `TÎ(p, i, r, g)` as an exact rational.
pub fn influence_exact(
    k: usize,
    pivot: usize,
    level: usize,
    group: usize,
    dists: &DistributionTable,
) -> Result<BigRational> {
    let mut acc = BigRational::zero();
    for (mask, binomial) in enumerate_subsets(k, pivot, level)? {
        let with_word = mask.with_pivot();
        let p_s = dists
            .get(&mask.subset)
            .ok_or_else(|| Error::IncompleteRun {
                missing: mask.subset.clone(),
            })?;
        let p_si = dists
            .get(&with_word)
            .ok_or(Error::IncompleteRun { missing: with_word })?;
        let diff = exact_probability(p_s, group) - exact_probability(p_si, group);
        acc += diff / BigRational::from_integer(BigInt::from(binomial));
    }
    Ok(acc)
}
