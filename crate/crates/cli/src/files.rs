//! Input file formats: stub dictionaries, simulated worlds, recorded
//! distribution tables and sweep slot files. All are JSON.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use wordsway_core::{GroupSpace, SimulatedWorld, StubTransmuter, WordSet};

use crate::error::AppError;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, AppError> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// JSON map `word → [replacement words]`.
pub fn load_dictionary(path: &Path) -> Result<StubTransmuter, AppError> {
    let dict: BTreeMap<String, Vec<String>> = read_json(path)?;
    Ok(StubTransmuter::new(dict))
}

/// `{"groups": [...], "word_bias": {word: logit}}`.
pub fn load_world(path: &Path) -> Result<SimulatedWorld, AppError> {
    read_json(path)
}

/// JSON map `placeholder → [words]`.
pub fn load_slots(path: &Path) -> Result<BTreeMap<String, Vec<String>>, AppError> {
    read_json(path)
}

/// Group distributions recorded from an earlier experiment, keyed by the
/// set of replaced word indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedTable {
    /// Prompt the table was recorded for, checked against the analyzed one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub groups: GroupSpace,
    /// Sample count used to turn probabilities into counts.
    #[serde(default)]
    pub samples: Option<u64>,
    pub distributions: Vec<RecordedEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedEntry {
    pub mask: WordSet,
    #[serde(default)]
    pub counts: Option<Vec<u64>>,
    #[serde(default)]
    pub probabilities: Option<Vec<f64>>,
}

impl RecordedTable {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let table: RecordedTable = read_json(path)?;
        table.counts().map_err(|message| AppError::Format {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(table)
    }

    /// Per-mask counts; probabilities are scaled by `samples` and rounded.
    pub fn counts(&self) -> Result<BTreeMap<WordSet, Vec<u64>>, String> {
        let l = self.groups.len();
        let mut out = BTreeMap::new();
        for entry in &self.distributions {
            let counts = match (&entry.counts, &entry.probabilities, self.samples) {
                (Some(c), _, _) => c.clone(),
                (None, Some(p), Some(m)) => {
                    let counts: Vec<u64> =
                        p.iter().map(|x| (x * m as f64).round() as u64).collect();
                    if counts.iter().sum::<u64>() != m {
                        return Err(format!(
                            "probabilities of mask {} do not round to {m} samples",
                            entry.mask
                        ));
                    }
                    counts
                }
                (None, Some(_), None) => {
                    return Err("probabilities need a top-level \"samples\"".into())
                }
                (None, None, _) => {
                    return Err(format!(
                        "mask {} has neither counts nor probabilities",
                        entry.mask
                    ))
                }
            };
            if counts.len() != l || counts.iter().sum::<u64>() == 0 {
                return Err(format!(
                    "mask {} needs {l} counts with a positive sum",
                    entry.mask
                ));
            }
            if out.insert(entry.mask.clone(), counts).is_some() {
                return Err(format!("mask {} appears twice", entry.mask));
            }
        }
        Ok(out)
    }

    pub fn backend_id(&self) -> String {
        let json = serde_json::to_string(self).expect("recorded table serializes");
        format!(
            "recorded:{}",
            wordsway_core::ids::content_id(&["recorded", &json])
        )
    }
}
