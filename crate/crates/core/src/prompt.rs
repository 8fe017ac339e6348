//! Prompts, group spaces, word subsets and sample records.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids;

/// A tokenized prompt. Word indices are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PromptRepr")]
pub struct Prompt {
    raw: String,
    words: Vec<String>,
    id: String,
}

#[derive(Deserialize)]
struct PromptRepr {
    raw: String,
    words: Vec<String>,
    id: String,
}

impl TryFrom<PromptRepr> for Prompt {
    type Error = Error;

    fn try_from(repr: PromptRepr) -> Result<Self> {
        let prompt = normalize_and_tokenize(&repr.raw)?;
        if prompt.words != repr.words || prompt.id != repr.id {
            return Err(Error::InvalidPrompt(format!(
                "stored words or id do not match raw prompt {:?}",
                repr.raw
            )));
        }
        Ok(prompt)
    }
}

/// Lowercases `raw`, splits on whitespace and strips leading and trailing
/// punctuation from every token. Tokens that are pure punctuation vanish.
pub fn normalize_and_tokenize(raw: &str) -> Result<Prompt> {
    let words: Vec<String> = raw
        .split_whitespace()
        .map(|tok| {
            tok.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect();
    if words.is_empty() {
        return Err(Error::InvalidPrompt(format!("no words in {raw:?}")));
    }
    Ok(Prompt {
        id: ids::content_id(&["prompt", raw]),
        raw: raw.to_string(),
        words,
    })
}

impl Prompt {
    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Number of words `k`.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Word at 1-based `index`.
    pub fn word(&self, index: usize) -> Option<&str> {
        index
            .checked_sub(1)
            .and_then(|i| self.words.get(i))
            .map(String::as_str)
    }

    /// Words joined with single spaces.
    pub fn normalized(&self) -> String {
        self.words.join(" ")
    }
}

/// Finite ordered set of sensitive-attribute values and the text each one is
/// rendered as for the classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GroupSpaceRepr")]
pub struct GroupSpace {
    groups: Vec<String>,
    text_templates: Vec<String>,
}

/// Accepts either a bare label list or `{groups, text_templates}`.
#[derive(Deserialize)]
#[serde(untagged)]
enum GroupSpaceRepr {
    Labels(Vec<String>),
    Full {
        groups: Vec<String>,
        text_templates: Option<Vec<String>>,
    },
}

impl TryFrom<GroupSpaceRepr> for GroupSpace {
    type Error = Error;

    fn try_from(repr: GroupSpaceRepr) -> Result<Self> {
        match repr {
            GroupSpaceRepr::Labels(groups) => GroupSpace::new(groups),
            GroupSpaceRepr::Full {
                groups,
                text_templates: Some(texts),
            } => GroupSpace::with_texts(groups, texts),
            GroupSpaceRepr::Full { groups, .. } => GroupSpace::new(groups),
        }
    }
}

impl GroupSpace {
    /// Group space whose classifier texts are the bare labels.
    pub fn new<S: Into<String>>(groups: impl IntoIterator<Item = S>) -> Result<Self> {
        let groups: Vec<String> = groups.into_iter().map(Into::into).collect();
        let texts = groups.clone();
        Self::with_texts(groups, texts)
    }

    pub fn with_texts(groups: Vec<String>, text_templates: Vec<String>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::InvalidGroupSpace(format!(
                "need at least two groups, got {}",
                groups.len()
            )));
        }
        if text_templates.len() != groups.len() {
            return Err(Error::InvalidGroupSpace(format!(
                "{} groups but {} text renderings",
                groups.len(),
                text_templates.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for g in &groups {
            if g.is_empty() || !seen.insert(g.as_str()) {
                return Err(Error::InvalidGroupSpace(format!(
                    "group labels must be unique and non-empty: {g:?}"
                )));
            }
        }
        if text_templates.iter().any(|t| t.trim().is_empty()) {
            return Err(Error::InvalidGroupSpace("empty text rendering".into()));
        }
        Ok(GroupSpace {
            groups,
            text_templates,
        })
    }

    /// The binary space `[male, female]`.
    pub fn binary_sex() -> Self {
        GroupSpace::new(["male", "female"]).expect("static group space is valid")
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn texts(&self) -> &[String] {
        &self.text_templates
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == label)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.groups[index]
    }
}

/// Sorted set of 1-based word indices. Used as the key of a replacement
/// distribution: the empty set is the original prompt.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<usize>", into = "Vec<usize>")]
pub struct WordSet(Vec<usize>);

impl WordSet {
    pub fn empty() -> Self {
        WordSet(Vec::new())
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = indices.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        WordSet(v)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    /// This set plus `index`.
    pub fn with(&self, index: usize) -> WordSet {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&index) {
            v.insert(pos, index);
        }
        WordSet(v)
    }

    /// Checks that every index lies in `1..=k`.
    pub fn validate(&self, k: usize) -> Result<()> {
        match self.0.iter().find(|&&i| i == 0 || i > k) {
            Some(bad) => Err(Error::InvalidMask(format!("index {bad} outside 1..={k}"))),
            None => Ok(()),
        }
    }
}

impl From<Vec<usize>> for WordSet {
    fn from(v: Vec<usize>) -> Self {
        WordSet::from_indices(v)
    }
}

impl From<WordSet> for Vec<usize> {
    fn from(s: WordSet) -> Self {
        s.0
    }
}

impl fmt::Display for WordSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (n, i) in self.0.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

/// A subset `S` of word indices paired with the pivot word `i ∉ S`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubsetMask {
    pub subset: WordSet,
    pub pivot: usize,
}

impl SubsetMask {
    /// Validates `pivot ∉ subset`, every index in `1..=k` and `|subset| ≤ level − 1`.
    pub fn new(subset: WordSet, pivot: usize, k: usize, level: usize) -> Result<Self> {
        if pivot == 0 || pivot > k {
            return Err(Error::InvalidMask(format!("pivot {pivot} outside 1..={k}")));
        }
        subset.validate(k)?;
        if subset.contains(pivot) {
            return Err(Error::InvalidMask(format!(
                "pivot {pivot} must not be in {subset}"
            )));
        }
        if level == 0 || subset.len() > level - 1 {
            return Err(Error::InvalidMask(format!(
                "|{subset}| exceeds level {level} minus one"
            )));
        }
        Ok(SubsetMask { subset, pivot })
    }

    /// `S ∪ {i}`.
    pub fn with_pivot(&self) -> WordSet {
        self.subset.with(self.pivot)
    }
}

/// One classified sample from one replacement distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub prompt_id: String,
    /// Stream identifier of the transmuted prompt `p_{/S}`.
    pub variant_id: String,
    pub mask: WordSet,
    pub replicate_index: u32,
    pub group: String,
    pub classifier_scores: Option<Vec<f64>>,
    pub seed: u64,
    pub image_ref: Option<String>,
    /// Variant id of the transmutation candidate drawn for this replicate.
    pub transmutation: Option<String>,
    pub rendered: String,
}
