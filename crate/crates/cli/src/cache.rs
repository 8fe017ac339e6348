//! Persistent sample cache, one JSON record per line.
//!
//! Records are keyed by `(prompt_id, variant_id, replicate_index, seed)`.
//! The file is written sorted by `(variant_id, replicate_index)` so that
//! identical runs produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use wordsway_core::SampleRecord;

use crate::error::AppError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CacheKey {
    pub prompt_id: String,
    pub variant_id: String,
    pub replicate_index: u32,
    pub seed: u64,
}

impl CacheKey {
    pub fn of(record: &SampleRecord) -> Self {
        CacheKey {
            prompt_id: record.prompt_id.clone(),
            variant_id: record.variant_id.clone(),
            replicate_index: record.replicate_index,
            seed: record.seed,
        }
    }
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "variant {} replicate {} (prompt {}, seed {})",
            self.variant_id, self.replicate_index, self.prompt_id, self.seed
        )
    }
}

#[derive(Debug, Default)]
pub struct SampleCache {
    entries: RwLock<BTreeMap<CacheKey, SampleRecord>>,
}

impl SampleCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads a cache file; a missing file is an empty cache.
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let cache = SampleCache::new();
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(cache),
            Err(e) => return Err(AppError::io(path, e)),
        };
        for (n, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let record: SampleRecord =
                serde_json::from_str(line).map_err(|e| AppError::Format {
                    path: path.to_path_buf(),
                    message: format!("line {}: {e}", n + 1),
                })?;
            cache.insert(record);
        }
        Ok(cache)
    }

    pub fn get(&self, key: &CacheKey) -> Option<SampleRecord> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    /// Last write wins; identical keys carry identical records by construction.
    pub fn insert(&self, record: SampleRecord) {
        self.entries
            .write()
            .expect("cache lock")
            .insert(CacheKey::of(&record), record);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All records in file order.
    pub fn records(&self) -> Vec<SampleRecord> {
        let mut out: Vec<SampleRecord> = self
            .entries
            .read()
            .expect("cache lock")
            .values()
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            (&a.variant_id, a.replicate_index, &a.prompt_id, a.seed).cmp(&(
                &b.variant_id,
                b.replicate_index,
                &b.prompt_id,
                b.seed,
            ))
        });
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), AppError> {
        let mut buf = Vec::new();
        for r in self.records() {
            serde_json::to_writer(&mut buf, &r).expect("records serialize");
            buf.push(b'\n');
        }
        write_atomic(path, &buf)
    }
}

/// Writes via a temporary sibling and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), AppError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let tmp: PathBuf = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| AppError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| AppError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}
