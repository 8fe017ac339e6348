//! Run manifests: the JSON record that makes an analysis reproducible.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wordsway_core::{
    GroupSpace, InfluenceScore, Prompt, TransmutationCandidate, TransmuterConfig, WordSet,
};

use crate::cache::write_atomic;
use crate::error::AppError;
use crate::files::read_json;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CACHE_FILE: &str = "samples.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    /// `simulated`, `recorded` or `remote`.
    pub kind: String,
    pub sampler: String,
    pub transmuter: Option<String>,
    pub adapter_url: Option<String>,
}

/// Everything that determines the outcome of an analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub prompt: Prompt,
    pub group_space: GroupSpace,
    pub level: usize,
    pub samples: u32,
    pub seed: u64,
    /// `auto`, `all` or a group label.
    pub group: String,
    pub transmuter: TransmuterConfig,
    pub bound_t: f64,
    pub backend: BackendInfo,
}

impl RunConfig {
    pub fn run_id(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        wordsway_core::ids::content_id(&["run", &json])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskCandidates {
    pub mask: WordSet,
    pub candidates: Vec<TransmutationCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionEntry {
    pub mask: WordSet,
    pub variant_id: String,
    pub samples: u64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub format_version: u32,
    pub run_id: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub config: RunConfig,
    /// Resolved report group; `None` reports every group.
    pub report_group: Option<String>,
    pub cache_file: String,
    pub candidates: Vec<MaskCandidates>,
    pub distributions: Vec<DistributionEntry>,
    pub scores: Vec<InfluenceScore>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let m: RunManifest = read_json(path)?;
        if m.kind != "analyze" {
            return Err(AppError::Format {
                path: path.to_path_buf(),
                message: format!("expected an analyze manifest, found kind {:?}", m.kind),
            });
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), AppError> {
        write_atomic(path, &to_pretty_json(self))
    }

    pub fn candidate_map(&self) -> BTreeMap<WordSet, Vec<TransmutationCandidate>> {
        self.candidates
            .iter()
            .map(|c| (c.mask.clone(), c.candidates.clone()))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("manifest serializes");
    out.push(b'\n');
    out
}

/// Reads only the `kind` field of a manifest.
pub fn manifest_kind(path: &Path) -> Result<String, AppError> {
    #[derive(Deserialize)]
    struct Kind {
        kind: String,
    }
    Ok(read_json::<Kind>(path)?.kind)
}
