//! Permutation-enumeration Shapley oracle.
//!
//! For a coalition game `v` over the words, the Shapley value of word `i` is
//! its average marginal contribution `v(Pre ∪ {i}) − v(Pre)` over all `k!`
//! orderings, where `Pre` is the set of words ordered before `i`. With
//! `v(S) = P_S(g)` the full-level influence satisfies `TI(p, i, k, g) = −k·φ_i`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::prompt::WordSet;

pub const MAX_ORACLE_WORDS: usize = 8;

/// Shapley value of word `pivot` by enumerating every ordering of `1..=k`.
pub fn shapley_oracle<F>(k: usize, pivot: usize, mut value: F) -> Result<f64>
where
    F: FnMut(&WordSet) -> f64,
{
    if k > MAX_ORACLE_WORDS {
        return Err(Error::OracleSize {
            words: k,
            max: MAX_ORACLE_WORDS,
        });
    }
    if pivot == 0 || pivot > k {
        return Err(Error::InvalidLevel {
            level: k,
            words: k,
            pivot,
        });
    }
    let mut memo: Vec<Option<f64>> = alloc::vec![None; 1 << k];
    let mut v = |bits: usize| -> f64 {
        *memo[bits].get_or_insert_with(|| {
            value(&WordSet::from_indices(
                (1..=k).filter(|j| bits & (1 << (j - 1)) != 0),
            ))
        })
    };

    let mut perm: Vec<usize> = (1..=k).collect();
    let mut total = 0.0;
    let mut count = 0u64;
    let mut visit = |perm: &[usize]| {
        let mut pre = 0usize;
        for &w in perm {
            if w == pivot {
                break;
            }
            pre |= 1 << (w - 1);
        }
        total += v(pre | (1 << (pivot - 1))) - v(pre);
        count += 1;
    };

    // Heap's algorithm, iterative form
    let mut c = alloc::vec![0usize; k];
    visit(&perm);
    let mut n = 0;
    while n < k {
        if c[n] < n {
            if n % 2 == 0 {
                perm.swap(0, n);
            } else {
                perm.swap(c[n], n);
            }
            visit(&perm);
            c[n] += 1;
            n = 0;
        } else {
            c[n] = 0;
            n += 1;
        }
    }
    Ok(total / count as f64)
}
