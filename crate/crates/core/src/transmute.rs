//! Word replacement ("transmutation") of masked prompt words.
//!
//! A [`Transmuter`] proposes candidate prompts in which every word of a mask
//! is replaced by a different word. The counterfactual distribution for a
//! mask is the mixture over its candidates given by [`sample_variant`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids;
use crate::prompt::{Prompt, WordSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSelection {
    /// Every returned candidate is equally likely.
    #[default]
    UniformTopN,
    /// Candidates are drawn proportionally to their score.
    ScoreWeighted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmuterConfig {
    pub num_candidates: usize,
    pub candidate_selection: CandidateSelection,
    pub forbid_original: bool,
}

impl Default for TransmuterConfig {
    fn default() -> Self {
        TransmuterConfig {
            num_candidates: 10,
            candidate_selection: CandidateSelection::UniformTopN,
            forbid_original: true,
        }
    }
}

impl TransmuterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_candidates == 0 {
            return Err(Error::InvalidConfig(
                "num_candidates must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A prompt with the words at `replaced`'s keys substituted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmutationCandidate {
    pub base_prompt_id: String,
    pub replaced: BTreeMap<usize, String>,
    pub score: f64,
    pub variant_id: String,
}

impl TransmutationCandidate {
    pub fn new(base_prompt_id: &str, replaced: BTreeMap<usize, String>, score: f64) -> Self {
        let variant_id = variant_id(base_prompt_id, &replaced);
        TransmutationCandidate {
            base_prompt_id: base_prompt_id.to_string(),
            replaced,
            score,
            variant_id,
        }
    }

    pub fn mask(&self) -> WordSet {
        WordSet::from_indices(self.replaced.keys().copied())
    }

    /// Words of `prompt` with the replacements applied; same length as the prompt.
    pub fn render(&self, prompt: &Prompt) -> Vec<String> {
        prompt
            .words()
            .iter()
            .enumerate()
            .map(|(j, w)| self.replaced.get(&(j + 1)).unwrap_or(w).clone())
            .collect()
    }
}

fn variant_id(base_prompt_id: &str, replaced: &BTreeMap<usize, String>) -> String {
    let mut spec = String::new();
    for (i, w) in replaced {
        spec.push_str(&format!("{i}={w};"));
    }
    ids::content_id(&["variant", base_prompt_id, &spec])
}

/// Source of replacement prompts.
pub trait Transmuter: Sync {
    /// Identifier of the backend and its snapshot, recorded in run manifests.
    fn backend_id(&self) -> String;

    /// Between 1 and `config.num_candidates` candidates, each replacing
    /// exactly the indices of `mask`.
    fn propose(
        &self,
        prompt: &Prompt,
        mask: &WordSet,
        config: &TransmuterConfig,
    ) -> Result<Vec<TransmutationCandidate>>;
}

/// Checks the propose preconditions shared by all backends.
pub fn check_mask(prompt: &Prompt, mask: &WordSet) -> Result<()> {
    if mask.is_empty() {
        return Err(Error::InvalidMask("transmutation mask is empty".into()));
    }
    mask.validate(prompt.len())
}

/// Filters backend output down to candidates that honor the contract:
/// replaced indices equal the mask, no duplicates, and (when configured) no
/// replacement equal to the original word. Keeps at most `num_candidates`
/// and rescales scores whose sum exceeds one.
pub fn sanitize_candidates(
    prompt: &Prompt,
    mask: &WordSet,
    candidates: Vec<TransmutationCandidate>,
    config: &TransmuterConfig,
) -> Result<Vec<TransmutationCandidate>> {
    let mut seen = alloc::collections::BTreeSet::new();
    let mut kept: Vec<TransmutationCandidate> = candidates
        .into_iter()
        .filter(|c| c.mask() == *mask)
        .filter(|c| {
            !config.forbid_original
                || c.replaced.iter().all(|(&i, w)| {
                    prompt
                        .word(i)
                        .is_some_and(|orig| orig.to_lowercase() != w.to_lowercase())
                })
        })
        .filter(|c| c.score.is_finite() && c.score >= 0.0)
        .filter(|c| seen.insert(c.variant_id.clone()))
        .take(config.num_candidates)
        .collect();
    if kept.is_empty() {
        return Err(Error::NoCandidates { mask: mask.clone() });
    }
    let total: f64 = kept.iter().map(|c| c.score).sum();
    if total > 1.0 {
        for c in &mut kept {
            c.score /= total;
        }
    }
    Ok(kept)
}

/// Draws one candidate according to `config.candidate_selection`.
pub fn sample_variant<'a>(
    candidates: &'a [TransmutationCandidate],
    seed: u64,
    config: &TransmuterConfig,
) -> Result<&'a TransmutationCandidate> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates {
            mask: WordSet::empty(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = selection_weights(candidates, config.candidate_selection);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, w) in candidates.iter().zip(&weights) {
        acc += w;
        if u < acc {
            return Ok(c);
        }
    }
    // rounding left a sliver above the last cumulative weight
    Ok(candidates
        .iter()
        .zip(&weights)
        .rev()
        .find(|(_, &w)| w > 0.0)
        .map(|(c, _)| c)
        .unwrap_or(&candidates[candidates.len() - 1]))
}

/// Mixture weights of the candidates under `selection`; they sum to one.
/// Score weighting with all-zero scores falls back to uniform.
pub fn selection_weights(
    candidates: &[TransmutationCandidate],
    selection: CandidateSelection,
) -> Vec<f64> {
    let n = candidates.len() as f64;
    match selection {
        CandidateSelection::UniformTopN => candidates.iter().map(|_| 1.0 / n).collect(),
        CandidateSelection::ScoreWeighted => {
            let total: f64 = candidates.iter().map(|c| c.score).sum();
            if total > 0.0 {
                candidates.iter().map(|c| c.score / total).collect()
            } else {
                candidates.iter().map(|_| 1.0 / n).collect()
            }
        }
    }
}

/// Dictionary-backed transmuter: each word maps to a fixed list of
/// replacements. Joint masks take the cartesian product of the per-word
/// lists, first masked index varying slowest, truncated to `num_candidates`.
/// Scores are uniform over the returned candidates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StubTransmuter {
    dictionary: BTreeMap<String, Vec<String>>,
}

impl StubTransmuter {
    pub fn new(dictionary: BTreeMap<String, Vec<String>>) -> Self {
        let dictionary = dictionary
            .into_iter()
            .map(|(k, v)| {
                (
                    k.to_lowercase(),
                    v.into_iter().map(|w| w.to_lowercase()).collect(),
                )
            })
            .collect();
        StubTransmuter { dictionary }
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a [&'a str])>) -> Self {
        Self::new(
            pairs
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(|w| w.to_string()).collect()))
                .collect(),
        )
    }

    pub fn dictionary(&self) -> &BTreeMap<String, Vec<String>> {
        &self.dictionary
    }

    fn replacements(&self, original: &str, config: &TransmuterConfig) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for w in self.dictionary.get(original).into_iter().flatten() {
            if config.forbid_original && w == original {
                continue;
            }
            if !out.contains(w) {
                out.push(w.clone());
            }
        }
        out
    }
}

impl Transmuter for StubTransmuter {
    fn backend_id(&self) -> String {
        let mut spec = String::new();
        for (k, v) in &self.dictionary {
            spec.push_str(k);
            spec.push('=');
            spec.push_str(&v.join(","));
            spec.push(';');
        }
        format!("stub:{}", ids::content_id(&["dictionary", &spec]))
    }

    fn propose(
        &self,
        prompt: &Prompt,
        mask: &WordSet,
        config: &TransmuterConfig,
    ) -> Result<Vec<TransmutationCandidate>> {
        config.validate()?;
        check_mask(prompt, mask)?;
        let lists: Vec<(usize, Vec<String>)> = mask
            .indices()
            .iter()
            .map(|&i| {
                (
                    i,
                    self.replacements(prompt.word(i).unwrap_or_default(), config),
                )
            })
            .collect();
        if lists.iter().any(|(_, l)| l.is_empty()) {
            return Err(Error::NoCandidates { mask: mask.clone() });
        }

        let mut combos: Vec<BTreeMap<usize, String>> = Vec::new();
        let mut odometer = alloc::vec![0usize; lists.len()];
        'outer: while combos.len() < config.num_candidates {
            combos.push(
                lists
                    .iter()
                    .zip(&odometer)
                    .map(|((i, l), &pos)| (*i, l[pos].clone()))
                    .collect(),
            );
            for slot in (0..lists.len()).rev() {
                odometer[slot] += 1;
                if odometer[slot] < lists[slot].1.len() {
                    continue 'outer;
                }
                odometer[slot] = 0;
            }
            break;
        }
        let score = 1.0 / combos.len() as f64;
        Ok(combos
            .into_iter()
            .map(|replaced| TransmutationCandidate::new(prompt.id(), replaced, score))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::normalize_and_tokenize;
    use alloc::vec;

    fn table_stub() -> StubTransmuter {
        StubTransmuter::from_pairs([
            ("doctor", &["physician", "surgeon", "official"][..]),
            ("hospital", &["university", "clinic", "time"][..]),
            ("a", &["the", "highly", "well"][..]),
        ])
    }

    #[test]
    fn proposes_dictionary_words() {
        let p = normalize_and_tokenize("a respected doctor at the hospital").unwrap();
        let stub = table_stub();
        let cfg = TransmuterConfig::default();
        let c = stub.propose(&p, &WordSet::from_indices([3]), &cfg).unwrap();
        let words: Vec<&str> = c.iter().map(|c| c.replaced[&3].as_str()).collect();
        assert_eq!(words, ["physician", "surgeon", "official"]);
        let c = stub.propose(&p, &WordSet::from_indices([6]), &cfg).unwrap();
        assert_eq!(
            c[1].render(&p),
            ["a", "respected", "doctor", "at", "the", "clinic"]
        );
    }

    #[test]
    fn two_word_dictionary_is_uniform() {
        let p = normalize_and_tokenize("a respected doctor at the hospital").unwrap();
        let stub = StubTransmuter::from_pairs([("doctor", &["nurse", "teacher"][..])]);
        let c = stub
            .propose(
                &p,
                &WordSet::from_indices([3]),
                &TransmuterConfig::default(),
            )
            .unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|c| c.score == 0.5));
        assert_ne!(c[0].variant_id, c[1].variant_id);
    }

    #[test]
    fn joint_masks_use_product_truncated() {
        let p = normalize_and_tokenize("a respected doctor at the hospital").unwrap();
        let stub = table_stub();
        let mut cfg = TransmuterConfig::default();
        let c = stub
            .propose(&p, &WordSet::from_indices([3, 6]), &cfg)
            .unwrap();
        assert_eq!(c.len(), 9);
        assert_eq!(c[0].replaced[&3], "physician");
        assert_eq!(c[1].replaced[&6], "clinic");
        cfg.num_candidates = 4;
        let c = stub
            .propose(&p, &WordSet::from_indices([3, 6]), &cfg)
            .unwrap();
        assert_eq!(c.len(), 4);
        assert!((c.iter().map(|c| c.score).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forbids_original_and_reports_exhaustion() {
        let p = normalize_and_tokenize("a doctor").unwrap();
        let stub = StubTransmuter::from_pairs([("doctor", &["doctor", "Doctor"][..])]);
        let mut cfg = TransmuterConfig::default();
        let err = stub
            .propose(&p, &WordSet::from_indices([2]), &cfg)
            .unwrap_err();
        assert!(matches!(err, Error::NoCandidates { .. }));
        cfg.forbid_original = false;
        assert_eq!(
            stub.propose(&p, &WordSet::from_indices([2]), &cfg)
                .unwrap()
                .len(),
            1
        );
        assert!(matches!(
            stub.propose(&p, &WordSet::from_indices([1]), &cfg),
            Err(Error::NoCandidates { .. })
        ));
    }

    #[test]
    fn rejects_bad_masks() {
        let p = normalize_and_tokenize("a doctor").unwrap();
        let stub = table_stub();
        let cfg = TransmuterConfig::default();
        assert!(matches!(
            stub.propose(&p, &WordSet::empty(), &cfg),
            Err(Error::InvalidMask(_))
        ));
        assert!(matches!(
            stub.propose(&p, &WordSet::from_indices([3]), &cfg),
            Err(Error::InvalidMask(_))
        ));
        let zero = TransmuterConfig {
            num_candidates: 0,
            ..cfg
        };
        assert!(stub
            .propose(&p, &WordSet::from_indices([2]), &zero)
            .is_err());
    }

    #[test]
    fn sanitize_drops_contract_violations() {
        let p = normalize_and_tokenize("a doctor").unwrap();
        let mask = WordSet::from_indices([2]);
        let mk = |i: usize, w: &str, s: f64| {
            TransmutationCandidate::new(p.id(), [(i, w.to_string())].into_iter().collect(), s)
        };
        let raw = vec![
            mk(2, "DOCTOR", 0.5),
            mk(1, "the", 0.5),
            mk(2, "nurse", 0.9),
            mk(2, "nurse", 0.9),
            mk(2, "lawyer", 0.6),
        ];
        let cfg = TransmuterConfig::default();
        let kept = sanitize_candidates(&p, &mask, raw, &cfg).unwrap();
        assert_eq!(kept.len(), 2);
        assert!((kept.iter().map(|c| c.score).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(sanitize_candidates(&p, &mask, vec![mk(2, "doctor", 0.1)], &cfg).is_err());
    }

    fn candidates(scores: &[f64]) -> Vec<TransmutationCandidate> {
        scores
            .iter()
            .enumerate()
            .map(|(n, &s)| {
                TransmutationCandidate::new(
                    "p",
                    [(1, alloc::format!("w{n}"))].into_iter().collect(),
                    s,
                )
            })
            .collect()
    }

    #[test]
    fn uniform_selection_frequencies() {
        let c = candidates(&[0.2, 0.2, 0.2]);
        let cfg = TransmuterConfig::default();
        let mut counts = [0usize; 3];
        for seed in 1..=3000u64 {
            let pick = sample_variant(&c, seed, &cfg).unwrap();
            counts[c.iter().position(|x| x == pick).unwrap()] += 1;
        }
        for n in counts {
            let f = n as f64 / 3000.0;
            assert!((f - 1.0 / 3.0).abs() < 0.03, "{counts:?}");
        }
    }

    #[test]
    fn weighted_selection_frequencies() {
        let c = candidates(&[0.9, 0.1]);
        let cfg = TransmuterConfig {
            candidate_selection: CandidateSelection::ScoreWeighted,
            ..TransmuterConfig::default()
        };
        let first = (0..10_000u64)
            .filter(|&s| sample_variant(&c, s, &cfg).unwrap() == &c[0])
            .count();
        assert!((first as f64 / 1e4 - 0.9).abs() < 0.02);
    }

    #[test]
    fn singleton_and_empty_selection() {
        let c = candidates(&[1.0]);
        let cfg = TransmuterConfig::default();
        for seed in [0, 1, u64::MAX] {
            assert_eq!(sample_variant(&c, seed, &cfg).unwrap(), &c[0]);
        }
        assert!(sample_variant(&[], 1, &cfg).is_err());
        assert_eq!(
            sample_variant(&candidates(&[0.3, 0.7]), 42, &cfg).unwrap(),
            sample_variant(&candidates(&[0.3, 0.7]), 42, &cfg).unwrap()
        );
    }

    #[test]
    fn zero_scores_fall_back_to_uniform() {
        let w = selection_weights(&candidates(&[0.0, 0.0]), CandidateSelection::ScoreWeighted);
        assert_eq!(w, [0.5, 0.5]);
    }
}
