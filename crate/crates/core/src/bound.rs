//! Concentration bounds for the influence estimator.
//!
//! [`concentration_bound`] evaluates
//!
//! ```text
//! δ = 4 Σ_{S ⊆ [k]\{i}, |S| ≤ r−1} exp(−t² m C(k−1,|S|)² / W²),   W = Σ_{s=0}^{r−1} C(k−1, s)
//! ```
//!
//! literally. [`hoeffding_bound`] is the direct Hoeffding bound on the
//! estimator viewed as one weighted sum of `2m·W` independent indicators:
//! `2 exp(−t² m / Σ_{s<r} 1/C(k−1,s))`.

use crate::error::{Error, Result};
use crate::influence::Confidence;
use crate::subsets::binomial;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub t: f64,
    pub samples: u64,
    pub words: usize,
    pub level: usize,
}

impl BoundParams {
    pub fn new(t: f64, samples: u64, words: usize, level: usize) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "deviation t must be positive, got {t}"
            )));
        }
        if samples == 0 {
            return Err(Error::InvalidConfig(
                "sample count must be at least 1".into(),
            ));
        }
        if level == 0 || level > words {
            return Err(Error::InvalidLevel {
                level,
                words,
                pivot: 1,
            });
        }
        Ok(BoundParams {
            t,
            samples,
            words,
            level,
        })
    }

    /// `W`, the number of subsets in the sum.
    fn subset_count(&self) -> f64 {
        (0..self.level)
            .map(|s| binomial(self.words - 1, s) as f64)
            .sum()
    }
}

/// Failure probability `δ` from the union-bound formula.
pub fn concentration_bound(params: &BoundParams) -> f64 {
    let w = params.subset_count();
    let scale = params.t * params.t * params.samples as f64 / (w * w);
    (0..params.level)
        .map(|s| {
            let c = binomial(params.words - 1, s) as f64;
            // C(k−1, s) subsets of this size share the same term
            4.0 * c * libm::exp(-scale * c * c)
        })
        .sum()
}

/// Failure probability from Hoeffding's inequality applied to the estimator
/// as a whole. Tighter than [`concentration_bound`] for every level.
pub fn hoeffding_bound(params: &BoundParams) -> f64 {
    let inv_sum: f64 = (0..params.level)
        .map(|s| 1.0 / binomial(params.words - 1, s) as f64)
        .sum();
    let t = params.t;
    (2.0 * libm::exp(-t * t * params.samples as f64 / inv_sum)).min(f64::MAX)
}

/// Smallest `m` with `concentration_bound(t, m, k, r) ≤ delta_target`.
///
/// Starts from the closed-form inversion with the worst coefficient
/// `C(k−1, 0) = 1` (every term bounded by `4 exp(−t² m / W²)`), then
/// bisects down using direct evaluation.
pub fn required_samples(t: f64, delta_target: f64, words: usize, level: usize) -> Result<u64> {
    if delta_target.is_nan() || delta_target <= 0.0 {
        return Err(Error::InvalidConfig(alloc::format!(
            "target failure probability must be positive, got {delta_target}"
        )));
    }
    let probe = BoundParams::new(t, 1, words, level)?;
    if concentration_bound(&probe) <= delta_target {
        return Ok(1);
    }
    let w = probe.subset_count();
    let closed = libm::log(4.0 * w / delta_target) * w * w / (t * t);
    let mut hi = libm::ceil(closed).max(1.0) as u64;
    let eval = |m: u64| {
        concentration_bound(&BoundParams {
            samples: m,
            ..probe
        })
    };
    while eval(hi) > delta_target {
        // guards float error in the closed form
        hi += 1;
    }
    let mut lo = 1u64; // eval(lo) > target
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if eval(mid) <= delta_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Both bounds for a score estimated from `samples` draws per distribution.
pub fn confidence(t: f64, samples: u64, words: usize, level: usize) -> Result<Confidence> {
    let params = BoundParams::new(t, samples, words, level)?;
    Ok(Confidence {
        t,
        samples,
        delta: concentration_bound(&params),
        delta_hoeffding: hoeffding_bound(&params),
    })
}
