//! Group samplers: a prompt goes in, one group label comes out.
//!
//! A sampler stands for the image generator composed with the group
//! classifier. [`SimulatedWorld`] is an analytic sampler whose exact group
//! probabilities are known, which makes every estimator in this crate
//! checkable against closed-form values.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids;
use crate::prompt::{GroupSpace, Prompt, SampleRecord, WordSet};
use crate::transmute::{
    sample_variant, selection_weights, CandidateSelection, TransmutationCandidate, TransmuterConfig,
};

/// Outcome of one generate-and-classify round.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupDraw {
    /// Index into the sampler's group space.
    pub group: usize,
    pub scores: Option<Vec<f64>>,
    pub image_ref: Option<String>,
}

pub trait GroupSampler: Sync {
    fn group_space(&self) -> &GroupSpace;

    fn backend_id(&self) -> String;

    /// One i.i.d. draw for the prompt `words`, fully determined by `seed`.
    fn sample(&self, words: &[String], seed: u64) -> Result<GroupDraw>;
}

/// Index of the largest score; ties go to the earliest group.
pub fn argmax_group(scores: &[f64], group_space: &GroupSpace) -> Result<usize> {
    if scores.len() != group_space.len() {
        return Err(Error::Protocol(format!(
            "classifier returned {} scores for {} groups",
            scores.len(),
            group_space.len()
        )));
    }
    let mut best = 0;
    for (n, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] || scores[best].is_nan() && !s.is_nan() {
            best = n;
        }
    }
    Ok(best)
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Binary world with `P(g₁ | prompt) = logistic(Σ_w bias(w))` over every word
/// occurrence. Words without a bias contribute zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorldRepr")]
pub struct SimulatedWorld {
    groups: GroupSpace,
    word_bias: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
struct WorldRepr {
    groups: GroupSpace,
    #[serde(default)]
    word_bias: BTreeMap<String, f64>,
}

impl TryFrom<WorldRepr> for SimulatedWorld {
    type Error = Error;

    fn try_from(repr: WorldRepr) -> Result<Self> {
        SimulatedWorld::new(repr.groups, repr.word_bias)
    }
}

impl SimulatedWorld {
    pub fn new(groups: GroupSpace, word_bias: BTreeMap<String, f64>) -> Result<Self> {
        if groups.len() != 2 {
            return Err(Error::InvalidGroupSpace(format!(
                "simulated world needs exactly two groups, got {}",
                groups.len()
            )));
        }
        if let Some((w, b)) = word_bias.iter().find(|(_, b)| !b.is_finite()) {
            return Err(Error::InvalidConfig(format!("bias of {w:?} is {b}")));
        }
        let word_bias = word_bias
            .into_iter()
            .map(|(w, b)| (w.to_lowercase(), b))
            .collect();
        Ok(SimulatedWorld { groups, word_bias })
    }

    pub fn from_biases<'a>(biases: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        let map = biases
            .into_iter()
            .map(|(w, b)| (String::from(w), b))
            .collect();
        SimulatedWorld::new(GroupSpace::binary_sex(), map).expect("binary space with finite biases")
    }

    pub fn word_bias(&self) -> &BTreeMap<String, f64> {
        &self.word_bias
    }

    pub fn bias(&self, word: &str) -> f64 {
        self.word_bias.get(word).copied().unwrap_or(0.0)
    }

    /// Exact group probabilities `(P(g₁), P(g₂))` for a prompt.
    pub fn exact_probability<S: AsRef<str>>(&self, words: &[S]) -> Vec<f64> {
        let logit: f64 = words.iter().map(|w| self.bias(w.as_ref())).sum();
        let p = logistic(logit);
        alloc::vec![p, 1.0 - p]
    }

    /// Exact probabilities of the mixture a transmuted replicate draws from.
    pub fn exact_mixture(
        &self,
        prompt: &Prompt,
        candidates: &[TransmutationCandidate],
        selection: CandidateSelection,
    ) -> Vec<f64> {
        let weights = selection_weights(candidates, selection);
        let mut out = alloc::vec![0.0; 2];
        for (c, w) in candidates.iter().zip(weights) {
            let p = self.exact_probability(&c.render(prompt));
            out[0] += w * p[0];
            out[1] += w * p[1];
        }
        out
    }
}

impl GroupSampler for SimulatedWorld {
    fn group_space(&self) -> &GroupSpace {
        &self.groups
    }

    fn backend_id(&self) -> String {
        let mut spec = String::new();
        for g in self.groups.groups() {
            spec.push_str(g);
            spec.push(';');
        }
        for (w, b) in &self.word_bias {
            spec.push_str(&format!("{w}={:?};", b));
        }
        format!("simulated:{}", ids::content_id(&["world", &spec]))
    }

    fn sample(&self, words: &[String], seed: u64) -> Result<GroupDraw> {
        let p = self.exact_probability(words)[0];
        let u: f64 = ChaCha8Rng::seed_from_u64(seed).random();
        Ok(GroupDraw {
            group: if u < p { 0 } else { 1 },
            scores: None,
            image_ref: None,
        })
    }
}

/// The prompt distribution a batch of samples is drawn from.
#[derive(Debug, Clone, Copy)]
pub enum Variant<'a> {
    /// The unmodified prompt (`S = ∅`), sampled without transmutation.
    Original(&'a Prompt),
    /// `p_{/S}`: every replicate draws one candidate, then one group label.
    Transmuted {
        prompt: &'a Prompt,
        mask: &'a WordSet,
        candidates: &'a [TransmutationCandidate],
    },
}

impl<'a> Variant<'a> {
    pub fn prompt(&self) -> &'a Prompt {
        match self {
            Variant::Original(p) | Variant::Transmuted { prompt: p, .. } => p,
        }
    }

    pub fn mask(&self) -> WordSet {
        match self {
            Variant::Original(_) => WordSet::empty(),
            Variant::Transmuted { mask, .. } => (*mask).clone(),
        }
    }

    /// Stream identifier, a function of prompt and mask only.
    pub fn variant_id(&self) -> String {
        stream_id(self.prompt().id(), &self.mask())
    }

    fn check(&self) -> Result<()> {
        if let Variant::Transmuted {
            prompt,
            mask,
            candidates,
        } = self
        {
            mask.validate(prompt.len())?;
            if mask.is_empty() {
                return Err(Error::InvalidPrompt(
                    "transmuted variant with empty mask".into(),
                ));
            }
            if candidates.is_empty() {
                return Err(Error::NoCandidates {
                    mask: (*mask).clone(),
                });
            }
            if let Some(c) = candidates.iter().find(|c| c.mask() != **mask) {
                return Err(Error::InvalidPrompt(format!(
                    "candidate {} replaces {} instead of {}",
                    c.variant_id,
                    c.mask(),
                    mask
                )));
            }
        }
        Ok(())
    }
}

/// Stream identifier of the transmuted prompt `p_{/S}`.
pub fn stream_id(prompt_id: &str, mask: &WordSet) -> String {
    ids::content_id(&["stream", prompt_id, &format!("{mask}")])
}

/// Seed of replicate `replicate_index` of the variant stream.
pub fn replicate_seed(base_seed: u64, variant_id: &str, replicate_index: u32) -> u64 {
    ids::replicate_seed(ids::stream_key(base_seed, variant_id), replicate_index)
}

/// Draws a single replicate. `seed` must come from [`replicate_seed`].
pub fn draw_replicate<S: GroupSampler + ?Sized>(
    sampler: &S,
    variant: &Variant<'_>,
    variant_id: &str,
    replicate_index: u32,
    seed: u64,
    config: &TransmuterConfig,
) -> Result<SampleRecord> {
    let (words, transmutation) = match variant {
        Variant::Original(p) => (p.words().to_vec(), None),
        Variant::Transmuted {
            prompt, candidates, ..
        } => {
            let c = sample_variant(candidates, ids::child_seed(seed, 1), config)?;
            (c.render(prompt), Some(c.variant_id.clone()))
        }
    };
    let draw = sampler.sample(&words, ids::child_seed(seed, 2))?;
    let space = sampler.group_space();
    if draw.group >= space.len() {
        return Err(Error::Protocol(format!(
            "group index {} outside a space of {}",
            draw.group,
            space.len()
        )));
    }
    Ok(SampleRecord {
        prompt_id: variant.prompt().id().into(),
        variant_id: variant_id.into(),
        mask: variant.mask(),
        replicate_index,
        group: space.label(draw.group).into(),
        classifier_scores: draw.scores,
        seed,
        image_ref: draw.image_ref,
        transmutation,
        rendered: words.join(" "),
    })
}

/// `m` records with replicate indices `1..=m`, drawn sequentially.
///
/// A failing replicate aborts the batch with [`Error::PartialBatch`], which
/// carries the records completed before it.
pub fn draw_samples<S: GroupSampler + ?Sized>(
    sampler: &S,
    variant: &Variant<'_>,
    m: u32,
    base_seed: u64,
    config: &TransmuterConfig,
) -> Result<Vec<SampleRecord>> {
    if m == 0 {
        return Err(Error::InvalidConfig(
            "sample count must be at least 1".into(),
        ));
    }
    variant.check()?;
    let variant_id = variant.variant_id();
    let key = ids::stream_key(base_seed, &variant_id);
    let mut out = Vec::with_capacity(m as usize);
    for j in 1..=m {
        let seed = ids::replicate_seed(key, j);
        match draw_replicate(sampler, variant, &variant_id, j, seed, config) {
            Ok(rec) => out.push(rec),
            Err(e) => {
                return Err(Error::PartialBatch {
                    completed: out,
                    source: alloc::boxed::Box::new(e),
                })
            }
        }
    }
    Ok(out)
}
