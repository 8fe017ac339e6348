//! Template-grid sweeps: expand `a [ADJECTIVE] [PERSON] at the [PLACE]`
//! over slot vocabularies, analyze every prompt, and average the scores of
//! each word across prompts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wordsway_core::{normalize_and_tokenize, GroupSpace, TransmuterConfig};

use crate::cache::write_atomic;
use crate::error::AppError;
use crate::manifest::{
    to_pretty_json, BackendInfo, RunConfig, RunStatus, FORMAT_VERSION, MANIFEST_FILE,
};
use crate::runner::{self, Source};

pub const SWEEP_FILE: &str = "sweep.json";
pub const PER_PROMPT_FILE: &str = "per_prompt.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateGrid {
    pub template: String,
    pub slots: BTreeMap<String, Vec<String>>,
}

/// One expanded prompt. `positions` maps a 1-based word index to the slot
/// that filled it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expansion {
    pub prompt: String,
    pub values: BTreeMap<String, String>,
    pub positions: BTreeMap<usize, String>,
}

enum Piece {
    Text(String),
    Slot(String),
}

/// Splits one whitespace token into literal text and `[NAME]` placeholders.
fn pieces(token: &str) -> Vec<Piece> {
    let mut out = Vec::new();
    let mut rest = token;
    while let Some(open) = rest.find('[') {
        let Some(len) = rest[open + 1..].find(']') else {
            break;
        };
        let name = &rest[open + 1..open + 1 + len];
        let valid = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_');
        if !valid {
            out.push(Piece::Text(rest[..open + 1].to_string()));
            rest = &rest[open + 1..];
            continue;
        }
        if open > 0 {
            out.push(Piece::Text(rest[..open].to_string()));
        }
        out.push(Piece::Slot(name.to_string()));
        rest = &rest[open + 2 + len..];
    }
    if !rest.is_empty() {
        out.push(Piece::Text(rest.to_string()));
    }
    out
}

impl TemplateGrid {
    /// Placeholders in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for tok in self.template.split_whitespace() {
            for p in pieces(tok) {
                if let Piece::Slot(name) = p {
                    if !seen.contains(&name) {
                        seen.push(name);
                    }
                }
            }
        }
        seen
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let names = self.placeholders();
        if names.is_empty() {
            return Err(AppError::Config(format!(
                "template {:?} has no [PLACEHOLDER]",
                self.template
            )));
        }
        for tok in self.template.split_whitespace() {
            let ps = pieces(tok);
            let slots = ps.iter().filter(|p| matches!(p, Piece::Slot(_))).count();
            let glued = ps.iter().any(|p| match p {
                Piece::Text(t) => t.chars().any(char::is_alphanumeric),
                Piece::Slot(_) => false,
            });
            if slots > 1 || (slots == 1 && glued) {
                return Err(AppError::Config(format!(
                    "placeholder must stand alone as a word, got {tok:?}"
                )));
            }
        }
        for name in &names {
            let values = self
                .slots
                .get(name)
                .ok_or_else(|| AppError::Config(format!("no values for [{name}]")))?;
            if values.is_empty() {
                return Err(AppError::Config(format!("empty value list for [{name}]")));
            }
            for v in values {
                match normalize_and_tokenize(v) {
                    Ok(p) if p.len() == 1 => {}
                    _ => {
                        return Err(AppError::Config(format!(
                            "value {v:?} of [{name}] must be a single word"
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of prompts the grid expands to.
    pub fn size(&self) -> usize {
        self.placeholders()
            .iter()
            .map(|n| self.slots.get(n).map_or(0, Vec::len))
            .product()
    }

    /// Cartesian product of the slot lists; the first placeholder varies
    /// slowest.
    pub fn expand(&self) -> Result<Vec<Expansion>, AppError> {
        self.validate()?;
        let names = self.placeholders();
        let lists: Vec<&Vec<String>> = names.iter().map(|n| &self.slots[n]).collect();
        let mut odometer = vec![0usize; names.len()];
        let mut out = Vec::with_capacity(self.size());
        loop {
            let values: BTreeMap<String, String> = names
                .iter()
                .zip(&odometer)
                .zip(&lists)
                .map(|((n, &i), l)| (n.clone(), l[i].clone()))
                .collect();
            out.push(self.fill(&values)?);

            let mut d = names.len();
            loop {
                if d == 0 {
                    return Ok(out);
                }
                d -= 1;
                odometer[d] += 1;
                if odometer[d] < lists[d].len() {
                    break;
                }
                odometer[d] = 0;
            }
        }
    }

    fn fill(&self, values: &BTreeMap<String, String>) -> Result<Expansion, AppError> {
        let mut words = Vec::new();
        let mut positions = BTreeMap::new();
        let mut count = 0usize;
        for tok in self.template.split_whitespace() {
            let mut slot = None;
            let text: String = pieces(tok)
                .into_iter()
                .map(|p| match p {
                    Piece::Text(t) => t,
                    Piece::Slot(n) => {
                        let v = values[&n].clone();
                        slot = Some(n);
                        v
                    }
                })
                .collect();
            if normalize_and_tokenize(&text).is_ok() {
                count += 1;
                if let Some(n) = slot {
                    positions.insert(count, n);
                }
            }
            words.push(text);
        }
        let prompt = words.join(" ");
        normalize_and_tokenize(&prompt)?;
        Ok(Expansion {
            prompt,
            values: values.clone(),
            positions,
        })
    }
}

/// Run settings shared by every prompt of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub group_space: GroupSpace,
    pub level: usize,
    pub samples: u32,
    pub seed: u64,
    pub group: String,
    pub transmuter: TransmuterConfig,
    pub bound_t: f64,
    pub backend: BackendInfo,
}

impl SweepSettings {
    pub fn run_config(&self, prompt: &str) -> Result<RunConfig, AppError> {
        Ok(RunConfig {
            prompt: normalize_and_tokenize(prompt)?,
            group_space: self.group_space.clone(),
            level: self.level,
            samples: self.samples,
            seed: self.seed,
            group: self.group.clone(),
            transmuter: self.transmuter.clone(),
            bound_t: self.bound_t,
            backend: self.backend.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub index: usize,
    pub expansion: Expansion,
    pub run_id: String,
    /// Relative to the sweep directory.
    pub dir: String,
    pub status: RunStatus,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub kind: String,
    pub format_version: u32,
    pub sweep_id: String,
    pub grid: TemplateGrid,
    pub settings: SweepSettings,
    pub runs: Vec<SweepEntry>,
    pub failures: Vec<usize>,
}

impl SweepManifest {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let m: SweepManifest = crate::files::read_json(path)?;
        if m.kind != "sweep" {
            return Err(AppError::Format {
                path: path.into(),
                message: format!("expected a sweep manifest, found kind {:?}", m.kind),
            });
        }
        Ok(m)
    }
}

pub fn sweep_id(grid: &TemplateGrid, settings: &SweepSettings) -> String {
    let json = serde_json::to_string(&(grid, settings)).expect("sweep serializes");
    wordsway_core::ids::content_id(&["sweep", &json])
}

/// One row of `per_prompt.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptScore {
    pub prompt_index: usize,
    pub prompt: String,
    pub word_index: usize,
    pub word: String,
    /// Placeholder that produced the word, empty for template text.
    pub slot: String,
    pub group: String,
    pub influence: f64,
}

/// One row of `aggregate.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub slot: String,
    pub word: String,
    pub group: String,
    pub prompts: usize,
    pub mean_influence: f64,
}

/// Mean influence per (slot, word, group), in order of first appearance.
pub fn aggregate(rows: &[PromptScore]) -> Vec<AggregateRow> {
    let mut order = Vec::new();
    let mut sums: BTreeMap<(String, String, String), (f64, usize)> = BTreeMap::new();
    for r in rows {
        let key = (r.slot.clone(), r.word.clone(), r.group.clone());
        let e = sums.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (0.0, 0)
        });
        e.0 += r.influence;
        e.1 += 1;
    }
    order
        .into_iter()
        .map(|key| {
            let (sum, n) = sums[&key];
            AggregateRow {
                slot: key.0,
                word: key.1,
                group: key.2,
                prompts: n,
                mean_influence: sum / n as f64,
            }
        })
        .collect()
}

fn read_scores(dir: &Path, entry: &SweepEntry) -> Result<Vec<PromptScore>, AppError> {
    let path = dir.join(&entry.dir).join(MANIFEST_FILE);
    let manifest = crate::manifest::RunManifest::load(&path)?;
    Ok(manifest
        .scores
        .iter()
        .map(|s| PromptScore {
            prompt_index: entry.index,
            prompt: manifest.config.prompt.normalized(),
            word_index: s.word_index,
            word: s.word.clone(),
            slot: entry
                .expansion
                .positions
                .get(&s.word_index)
                .cloned()
                .unwrap_or_default(),
            group: s.group.clone(),
            influence: s.value,
        })
        .collect())
}

fn csv_of<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// Writes `per_prompt.csv`, `aggregate.csv` and the sweep manifest.
fn write_sweep_reports(
    dir: &Path,
    manifest: &SweepManifest,
) -> Result<Vec<AggregateRow>, AppError> {
    let mut rows = Vec::new();
    for entry in manifest
        .runs
        .iter()
        .filter(|e| e.status == RunStatus::Complete)
    {
        rows.extend(read_scores(dir, entry)?);
    }
    let agg = aggregate(&rows);
    write_atomic(&dir.join(PER_PROMPT_FILE), &csv_of(&rows))?;
    write_atomic(&dir.join(AGGREGATE_FILE), &csv_of(&agg))?;
    write_atomic(&dir.join(SWEEP_FILE), &to_pretty_json(manifest))?;
    Ok(agg)
}

pub struct SweepOutput {
    pub dir: PathBuf,
    pub manifest: SweepManifest,
    pub aggregate: Vec<AggregateRow>,
}

/// Analyzes every prompt of the grid under `out_root/<sweep id>`. A failing
/// prompt is recorded and the sweep carries on; only IO errors abort it.
pub fn run_sweep(
    out_root: &Path,
    grid: &TemplateGrid,
    settings: &SweepSettings,
    source: &Source<'_>,
    parallelism: usize,
) -> Result<SweepOutput, AppError> {
    if matches!(source, Source::Recorded(_)) {
        return Err(AppError::Config(
            "sweeps need a sampling backend, not a recorded table".into(),
        ));
    }
    let expansions = grid.expand()?;
    let id = sweep_id(grid, settings);
    let dir = out_root.join(&id);
    let mut runs = Vec::with_capacity(expansions.len());
    let mut failures = Vec::new();
    for (n, expansion) in expansions.into_iter().enumerate() {
        let index = n + 1;
        let rel = format!("prompts/{index:03}");
        let config = settings.run_config(&expansion.prompt)?;
        let (status, error) = match runner::run_into(&dir.join(&rel), &config, source, parallelism)
        {
            Ok(_) => (RunStatus::Complete, None),
            Err(e @ AppError::Io { .. }) => return Err(e),
            Err(e) => {
                failures.push(index);
                (RunStatus::Incomplete, Some(e.to_string()))
            }
        };
        runs.push(SweepEntry {
            index,
            run_id: config.run_id(),
            expansion,
            dir: rel,
            status,
            error,
        });
    }
    let manifest = SweepManifest {
        kind: "sweep".into(),
        format_version: FORMAT_VERSION,
        sweep_id: id,
        grid: grid.clone(),
        settings: settings.clone(),
        runs,
        failures,
    };
    let aggregate = write_sweep_reports(&dir, &manifest)?;
    Ok(SweepOutput {
        dir,
        manifest,
        aggregate,
    })
}

/// Replays every completed run of a sweep into `out_dir` and rebuilds the
/// sweep tables there.
pub fn replay_sweep(manifest_path: &Path, out_dir: &Path) -> Result<SweepOutput, AppError> {
    let manifest = SweepManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    for entry in manifest
        .runs
        .iter()
        .filter(|e| e.status == RunStatus::Complete)
    {
        runner::replay(
            &dir.join(&entry.dir).join(MANIFEST_FILE),
            &out_dir.join(&entry.dir),
        )?;
    }
    let aggregate = write_sweep_reports(out_dir, &manifest)?;
    Ok(SweepOutput {
        dir: out_dir.to_path_buf(),
        manifest,
        aggregate,
    })
}

/// Aggregate rows as a plain text table, grouped by slot.
pub fn render_aggregate(rows: &[AggregateRow], group: Option<&str>) -> String {
    let mut out = String::new();
    let mut slots: Vec<&str> = rows
        .iter()
        .map(|r| r.slot.as_str())
        .filter(|s| !s.is_empty())
        .collect();
    slots.sort_unstable();
    slots.dedup();
    for slot in slots {
        out.push_str(&format!("[{slot}]\n"));
        for r in rows
            .iter()
            .filter(|r| r.slot == slot && group.is_none_or(|g| g == r.group))
        {
            out.push_str(&format!(
                "  {:<14} {:<10} {:>8.3}  (n={})\n",
                r.word, r.group, r.mean_influence, r.prompts
            ));
        }
    }
    out
}
