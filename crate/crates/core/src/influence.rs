//! r-level word influence and its Monte-Carlo estimator.
//!
//! For a prompt with `k` words, the r-level influence of word `i` on group
//! `g` is
//!
//! ```text
//! TI(p, i, r, g) = Σ_{S ⊆ [k], i ∉ S, |S| ≤ r−1} (P_S(g) − P_{S∪{i}}(g)) / C(k−1, |S|)
//! ```
//!
//! where `P_S` is the group distribution after replacing the words in `S`.
//! The estimator substitutes empirical frequencies `P̂_S` over `m` samples.
//! Positive values mean the word pushes generations towards `g`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::{GroupSpace, Prompt, SampleRecord, WordSet};
use crate::sampler::{draw_samples, GroupSampler, Variant};
use crate::subsets::{enumerate_subsets, required_masks};
use crate::transmute::{TransmutationCandidate, Transmuter, TransmuterConfig};

/// Group counts over `m` classified samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct EmpiricalDistribution {
    counts: Vec<u64>,
}

impl TryFrom<Vec<u64>> for EmpiricalDistribution {
    type Error = Error;

    fn try_from(counts: Vec<u64>) -> Result<Self> {
        EmpiricalDistribution::from_counts(counts)
    }
}

impl From<EmpiricalDistribution> for Vec<u64> {
    fn from(d: EmpiricalDistribution) -> Self {
        d.counts
    }
}

impl EmpiricalDistribution {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        if counts.iter().sum::<u64>() == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok(EmpiricalDistribution { counts })
    }

    /// Tallies record labels over `group_space`.
    pub fn from_records(records: &[SampleRecord], group_space: &GroupSpace) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut counts = alloc::vec![0u64; group_space.len()];
        for r in records {
            let g = group_space.index_of(&r.group).ok_or_else(|| {
                Error::Protocol(format!("label {:?} not in the group space", r.group))
            })?;
            counts[g] += 1;
        }
        Ok(EmpiricalDistribution { counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of samples `m`.
    pub fn samples(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `P̂(g)`; zero for a group index outside the tally.
    pub fn probability(&self, group: usize) -> f64 {
        self.counts.get(group).copied().unwrap_or(0) as f64 / self.samples() as f64
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.counts.len())
            .map(|g| self.probability(g))
            .collect()
    }

    /// Most frequent group, earliest on ties.
    pub fn majority(&self) -> usize {
        let mut best = 0;
        for (g, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = g;
            }
        }
        best
    }
}

/// Per-mask empirical distributions of one run.
pub type DistributionTable = BTreeMap<WordSet, EmpiricalDistribution>;

/// One term of the influence sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub subset: WordSet,
    /// `C(k − 1, |S|)`.
    pub binomial: u64,
    pub weight: f64,
    /// `P̂_S(g)`.
    pub p_subset: f64,
    /// `P̂_{S∪{i}}(g)`.
    pub p_with_word: f64,
}

impl Contribution {
    pub fn term(&self) -> f64 {
        self.weight * (self.p_subset - self.p_with_word)
    }
}

/// Deviation bound attached to a score: `P(|TÎ − TI| > t) ≤ delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    pub t: f64,
    pub samples: u64,
    pub delta: f64,
    pub delta_hoeffding: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceScore {
    pub word_index: usize,
    pub word: String,
    pub group: String,
    pub level: usize,
    pub value: f64,
    pub contributions: Vec<Contribution>,
    pub confidence: Option<Confidence>,
}

/// Evaluates the influence sum for pivot `pivot` against any probability
/// source. `prob(S)` must return `P_S(g)` for the group being scored.
pub fn influence_with<F>(
    k: usize,
    pivot: usize,
    level: usize,
    mut prob: F,
) -> Result<(f64, Vec<Contribution>)>
where
    F: FnMut(&WordSet) -> Result<f64>,
{
    let mut value = 0.0;
    let mut contributions = Vec::new();
    for (mask, binomial) in enumerate_subsets(k, pivot, level)? {
        let with_word = mask.with_pivot();
        let c = Contribution {
            weight: 1.0 / binomial as f64,
            binomial,
            p_subset: prob(&mask.subset)?,
            p_with_word: prob(&with_word)?,
            subset: mask.subset,
        };
        value += c.term();
        contributions.push(c);
    }
    Ok((value, contributions))
}

fn lookup<'a>(dists: &'a DistributionTable, mask: &WordSet) -> Result<&'a EmpiricalDistribution> {
    dists.get(mask).ok_or_else(|| Error::IncompleteRun {
        missing: mask.clone(),
    })
}

/// Estimated influence `TÎ(p, i, r, g)` of word `pivot` from a complete
/// distribution table.
pub fn influence(
    prompt: &Prompt,
    pivot: usize,
    level: usize,
    group: usize,
    group_space: &GroupSpace,
    dists: &DistributionTable,
) -> Result<InfluenceScore> {
    if group >= group_space.len() {
        return Err(Error::InvalidGroupSpace(format!(
            "no group with index {group}"
        )));
    }
    let (value, contributions) = influence_with(prompt.len(), pivot, level, |mask| {
        Ok(lookup(dists, mask)?.probability(group))
    })?;
    Ok(InfluenceScore {
        word_index: pivot,
        word: prompt.word(pivot).unwrap_or_default().into(),
        group: group_space.label(group).into(),
        level,
        value,
        contributions,
        confidence: None,
    })
}

/// Scores every word of `prompt` for `group`.
pub fn score_table(
    prompt: &Prompt,
    level: usize,
    group: usize,
    group_space: &GroupSpace,
    dists: &DistributionTable,
) -> Result<Vec<InfluenceScore>> {
    (1..=prompt.len())
        .map(|i| influence(prompt, i, level, group, group_space, dists))
        .collect()
}

/// How to obtain the distributions of one run: which backends, how many
/// samples per distribution, and the base seed.
pub struct SamplingPlan<'a> {
    pub transmuter: &'a dyn Transmuter,
    pub sampler: &'a dyn GroupSampler,
    pub config: TransmuterConfig,
    pub samples: u32,
    pub base_seed: u64,
}

/// Everything a plan produced for one prompt.
#[derive(Debug, Clone, Default)]
pub struct SampledRun {
    pub distributions: DistributionTable,
    pub candidates: BTreeMap<WordSet, Vec<TransmutationCandidate>>,
    pub records: Vec<SampleRecord>,
}

impl SamplingPlan<'_> {
    /// Samples `P̂_S` for one mask. The empty mask is the original prompt.
    pub fn distribution(
        &self,
        prompt: &Prompt,
        mask: &WordSet,
    ) -> Result<(
        EmpiricalDistribution,
        Vec<TransmutationCandidate>,
        Vec<SampleRecord>,
    )> {
        let candidates = if mask.is_empty() {
            Vec::new()
        } else {
            self.transmuter.propose(prompt, mask, &self.config)?
        };
        let variant = if mask.is_empty() {
            Variant::Original(prompt)
        } else {
            Variant::Transmuted {
                prompt,
                mask,
                candidates: &candidates,
            }
        };
        let records = draw_samples(
            self.sampler,
            &variant,
            self.samples,
            self.base_seed,
            &self.config,
        )?;
        let dist = EmpiricalDistribution::from_records(&records, self.sampler.group_space())?;
        Ok((dist, candidates, records))
    }

    /// Samples every distribution needed to score all words at `level`,
    /// each unique mask exactly once.
    pub fn collect(&self, prompt: &Prompt, level: usize) -> Result<SampledRun> {
        if level == 0 || level > prompt.len() {
            return Err(Error::InvalidLevel {
                level,
                words: prompt.len(),
                pivot: 1,
            });
        }
        let mut run = SampledRun::default();
        for mask in required_masks(prompt.len(), level) {
            let (dist, candidates, records) = self.distribution(prompt, &mask)?;
            run.records.extend(records);
            if !candidates.is_empty() {
                run.candidates.insert(mask.clone(), candidates);
            }
            run.distributions.insert(mask, dist);
        }
        Ok(run)
    }
}

/// Samples and scores every word of `prompt` for `group` at `level`.
pub fn influence_all(
    prompt: &Prompt,
    level: usize,
    group: usize,
    plan: &SamplingPlan<'_>,
) -> Result<Vec<InfluenceScore>> {
    let run = plan.collect(prompt, level)?;
    score_table(
        prompt,
        level,
        group,
        plan.sampler.group_space(),
        &run.distributions,
    )
}
