//! Subset enumeration for r-level scores.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::prompt::{SubsetMask, WordSet};

/// `C(n, k)`; zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for j in 0..k {
        // exact at every step: acc * (n - j) is divisible by (j + 1)
        acc = acc * (n - j) as u64 / (j as u64 + 1);
    }
    acc
}

/// All size-`size` subsets of `items`, in lexicographic order.
pub fn combinations(items: &[usize], size: usize) -> Vec<WordSet> {
    let n = items.len();
    if size > n {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(binomial(n, size) as usize);
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(WordSet::from_indices(idx.iter().map(|&j| items[j])));
        // rightmost position that can still advance
        let mut pos = size;
        while pos > 0 && idx[pos - 1] == pos - 1 + n - size {
            pos -= 1;
        }
        if pos == 0 {
            return out;
        }
        idx[pos - 1] += 1;
        for j in pos..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Subsets `S ⊆ [k] \ {i}` with `|S| ≤ r − 1`, each paired with the
/// binomial denominator `C(k − 1, |S|)`. Ordered by size, then
/// lexicographically; the first entry is `(∅, 1)`.
pub fn enumerate_subsets(k: usize, pivot: usize, level: usize) -> Result<Vec<(SubsetMask, u64)>> {
    if pivot == 0 || pivot > k || level == 0 || level > k {
        return Err(Error::InvalidLevel {
            level,
            words: k,
            pivot,
        });
    }
    let others: Vec<usize> = (1..=k).filter(|&j| j != pivot).collect();
    let mut out = Vec::new();
    for size in 0..level {
        let denom = binomial(k - 1, size);
        for subset in combinations(&others, size) {
            out.push((SubsetMask { subset, pivot }, denom));
        }
    }
    Ok(out)
}

/// Every subset of `[k]` of size at most `level`: the distributions needed to
/// score all `k` words at that level.
pub fn required_masks(k: usize, level: usize) -> Vec<WordSet> {
    let all: Vec<usize> = (1..=k).collect();
    (0..=level.min(k))
        .flat_map(|size| combinations(&all, size))
        .collect()
}
