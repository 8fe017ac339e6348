//! Runs one analysis: gathers every distribution a level needs (from cache,
//! sampler or a recorded table), scores all words, and writes the run
//! directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use wordsway_core::bound::confidence;
use wordsway_core::sampler::{draw_replicate, replicate_seed, stream_id};
use wordsway_core::subsets::required_masks;
use wordsway_core::{
    score_table, DistributionTable, EmpiricalDistribution, Error, GroupSampler, GroupSpace,
    InfluenceScore, Prompt, SampleRecord, TransmutationCandidate, Transmuter, Variant, WordSet,
};

use crate::cache::{CacheKey, SampleCache};
use crate::error::AppError;
use crate::files::RecordedTable;
use crate::manifest::{
    DistributionEntry, MaskCandidates, RunConfig, RunManifest, RunStatus, CACHE_FILE,
    FORMAT_VERSION, MANIFEST_FILE,
};
use crate::report;

/// Where distributions come from.
pub enum Source<'a> {
    Sampled {
        sampler: &'a dyn GroupSampler,
        transmuter: &'a dyn Transmuter,
    },
    Recorded(&'a RecordedTable),
}

impl Source<'_> {
    pub fn group_space(&self) -> &GroupSpace {
        match self {
            Source::Sampled { sampler, .. } => sampler.group_space(),
            Source::Recorded(t) => &t.groups,
        }
    }
}

/// Distributions and candidates gathered so far.
#[derive(Debug, Default)]
pub struct Gathered {
    pub distributions: DistributionTable,
    pub candidates: BTreeMap<WordSet, Vec<TransmutationCandidate>>,
}

pub struct Failure {
    pub error: Error,
    pub gathered: Gathered,
}

fn rayon_pool(parallelism: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool")
}

fn replicate_key(prompt: &Prompt, variant_id: &str, seed: u64, j: u32) -> CacheKey {
    CacheKey {
        prompt_id: prompt.id().to_string(),
        variant_id: variant_id.to_string(),
        replicate_index: j,
        seed: replicate_seed(seed, variant_id, j),
    }
}

fn recorded_record(
    prompt: &Prompt,
    mask: &WordSet,
    groups: &GroupSpace,
    counts: &[u64],
    key: &CacheKey,
) -> SampleRecord {
    let mut acc = 0u64;
    let group = counts
        .iter()
        .position(|&c| {
            acc += c;
            u64::from(key.replicate_index) <= acc
        })
        .unwrap_or(counts.len() - 1);
    let rendered: Vec<&str> = prompt
        .words()
        .iter()
        .enumerate()
        .map(|(j, w)| {
            if mask.contains(j + 1) {
                "_"
            } else {
                w.as_str()
            }
        })
        .collect();
    SampleRecord {
        prompt_id: key.prompt_id.clone(),
        variant_id: key.variant_id.clone(),
        mask: mask.clone(),
        replicate_index: key.replicate_index,
        group: groups.label(group).to_string(),
        classifier_scores: None,
        seed: key.seed,
        image_ref: None,
        transmutation: None,
        rendered: rendered.join(" "),
    }
}

/// Collects the distribution of every mask needed at `config.level`,
/// drawing only replicates missing from `cache`. Replicates of one mask run
/// on up to `parallelism` threads and are assembled by replicate index.
pub fn gather(
    config: &RunConfig,
    source: &Source<'_>,
    cache: &SampleCache,
    known_candidates: &BTreeMap<WordSet, Vec<TransmutationCandidate>>,
    parallelism: usize,
) -> Result<Gathered, Failure> {
    let prompt = &config.prompt;
    let groups = source.group_space();
    let recorded = match source {
        Source::Recorded(t) => Some(t.counts().map_err(|m| Failure {
            error: Error::InvalidConfig(m),
            gathered: Gathered::default(),
        })?),
        Source::Sampled { .. } => None,
    };
    let pool = rayon_pool(parallelism);
    let mut out = Gathered::default();

    macro_rules! fail {
        ($e:expr) => {
            return Err(Failure {
                error: $e,
                gathered: out,
            })
        };
    }

    if config.level == 0 || config.level > prompt.len() {
        fail!(Error::InvalidLevel {
            level: config.level,
            words: prompt.len(),
            pivot: 1
        });
    }

    for mask in required_masks(prompt.len(), config.level) {
        let variant_id = stream_id(prompt.id(), &mask);
        let m = match &recorded {
            Some(r) => match r.get(&mask) {
                Some(c) => c.iter().sum::<u64>() as u32,
                None => fail!(Error::IncompleteRun { missing: mask }),
            },
            None => config.samples,
        };
        let keys: Vec<CacheKey> = (1..=m)
            .map(|j| replicate_key(prompt, &variant_id, config.seed, j))
            .collect();
        let mut records: Vec<Option<SampleRecord>> = keys.iter().map(|k| cache.get(k)).collect();

        match source {
            Source::Recorded(_) => {
                let counts = &recorded.as_ref().expect("recorded counts")[&mask];
                for (slot, key) in records.iter_mut().zip(&keys) {
                    if slot.is_none() {
                        let r = recorded_record(prompt, &mask, groups, counts, key);
                        cache.insert(r.clone());
                        *slot = Some(r);
                    }
                }
            }
            Source::Sampled {
                sampler,
                transmuter,
            } => {
                if !mask.is_empty() {
                    let candidates = match known_candidates.get(&mask) {
                        Some(c) => c.clone(),
                        None => match transmuter.propose(prompt, &mask, &config.transmuter) {
                            Ok(c) => c,
                            Err(e) => fail!(e),
                        },
                    };
                    out.candidates.insert(mask.clone(), candidates);
                }
                let missing: Vec<usize> = (0..records.len())
                    .filter(|&n| records[n].is_none())
                    .collect();
                if !missing.is_empty() {
                    let candidates = out.candidates.get(&mask).map(Vec::as_slice).unwrap_or(&[]);
                    let variant = if mask.is_empty() {
                        Variant::Original(prompt)
                    } else {
                        Variant::Transmuted {
                            prompt,
                            mask: &mask,
                            candidates,
                        }
                    };
                    let drawn: Vec<Result<SampleRecord, Error>> = pool.install(|| {
                        missing
                            .par_iter()
                            .map(|&n| {
                                let key = &keys[n];
                                draw_replicate(
                                    *sampler,
                                    &variant,
                                    &variant_id,
                                    key.replicate_index,
                                    key.seed,
                                    &config.transmuter,
                                )
                            })
                            .collect()
                    });
                    let mut first_error = None;
                    for (n, result) in missing.into_iter().zip(drawn) {
                        match result {
                            Ok(r) => {
                                cache.insert(r.clone());
                                records[n] = Some(r);
                            }
                            Err(e) => {
                                first_error.get_or_insert(e);
                            }
                        }
                    }
                    if let Some(e) = first_error {
                        let completed = records.into_iter().flatten().collect();
                        fail!(Error::PartialBatch {
                            completed,
                            source: Box::new(e),
                        });
                    }
                }
            }
        }

        let records: Vec<SampleRecord> = records.into_iter().flatten().collect();
        match EmpiricalDistribution::from_records(&records, groups) {
            Ok(d) => {
                out.distributions.insert(mask, d);
            }
            Err(e) => fail!(e),
        }
    }
    Ok(out)
}

/// Report group for a `auto | all | label` choice.
pub fn resolve_report_group(
    choice: &str,
    groups: &GroupSpace,
    original: Option<&EmpiricalDistribution>,
) -> Result<Option<String>, AppError> {
    match choice {
        "all" => Ok(None),
        "auto" => {
            let g = match original {
                Some(d) if groups.len() == 2 => d.majority(),
                _ => 0,
            };
            Ok(Some(groups.label(g).to_string()))
        }
        label => groups
            .index_of(label)
            .map(|_| Some(label.to_string()))
            .ok_or_else(|| {
                AppError::Config(format!("group {label:?} not in {:?}", groups.groups()))
            }),
    }
}

/// Scores of every word for every group, word-major.
pub fn score_all(
    config: &RunConfig,
    table: &DistributionTable,
) -> Result<Vec<InfluenceScore>, Error> {
    let groups = &config.group_space;
    let per_group: Vec<Vec<InfluenceScore>> = (0..groups.len())
        .map(|g| score_table(&config.prompt, config.level, g, groups, table))
        .collect::<Result<_, _>>()?;
    let min_samples = table
        .values()
        .map(EmpiricalDistribution::samples)
        .min()
        .unwrap_or(1);
    let conf = confidence(
        config.bound_t,
        min_samples,
        config.prompt.len(),
        config.level,
    )?;
    let mut out = Vec::with_capacity(per_group.len() * config.prompt.len());
    for i in 0..config.prompt.len() {
        for scores in &per_group {
            let mut s = scores[i].clone();
            s.confidence = Some(conf);
            out.push(s);
        }
    }
    Ok(out)
}

fn distribution_entries(config: &RunConfig, table: &DistributionTable) -> Vec<DistributionEntry> {
    table
        .iter()
        .map(|(mask, d)| DistributionEntry {
            mask: mask.clone(),
            variant_id: stream_id(config.prompt.id(), mask),
            samples: d.samples(),
            counts: d.counts().to_vec(),
        })
        .collect()
}

/// Manifest of a finished run.
pub fn complete_manifest(config: &RunConfig, gathered: &Gathered) -> Result<RunManifest, AppError> {
    let report_group = resolve_report_group(
        &config.group,
        &config.group_space,
        gathered.distributions.get(&WordSet::empty()),
    )?;
    let scores = score_all(config, &gathered.distributions)?;
    Ok(RunManifest {
        kind: "analyze".into(),
        format_version: FORMAT_VERSION,
        run_id: config.run_id(),
        status: RunStatus::Complete,
        error: None,
        config: config.clone(),
        report_group,
        cache_file: CACHE_FILE.into(),
        candidates: gathered
            .candidates
            .iter()
            .map(|(mask, c)| MaskCandidates {
                mask: mask.clone(),
                candidates: c.clone(),
            })
            .collect(),
        distributions: distribution_entries(config, &gathered.distributions),
        scores,
    })
}

fn incomplete_manifest(config: &RunConfig, gathered: &Gathered, error: &Error) -> RunManifest {
    RunManifest {
        kind: "analyze".into(),
        format_version: FORMAT_VERSION,
        run_id: config.run_id(),
        status: RunStatus::Incomplete,
        error: Some(error.to_string()),
        config: config.clone(),
        report_group: None,
        cache_file: CACHE_FILE.into(),
        candidates: gathered
            .candidates
            .iter()
            .map(|(mask, c)| MaskCandidates {
                mask: mask.clone(),
                candidates: c.clone(),
            })
            .collect(),
        distributions: distribution_entries(config, &gathered.distributions),
        scores: Vec::new(),
    }
}

pub struct RunOutput {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

/// Runs the analysis into `dir`, reusing any cache and candidates already
/// there. On backend failure the partial manifest and cache are written
/// before the error is returned.
pub fn run_into(
    dir: &Path,
    config: &RunConfig,
    source: &Source<'_>,
    parallelism: usize,
) -> Result<RunOutput, AppError> {
    if source.group_space() != &config.group_space {
        return Err(AppError::Config(
            "group space does not match the backend".into(),
        ));
    }
    let cache_path = dir.join(CACHE_FILE);
    let manifest_path = dir.join(MANIFEST_FILE);
    let cache = SampleCache::load(&cache_path)?;
    let known = if manifest_path.exists() {
        RunManifest::load(&manifest_path)?.candidate_map()
    } else {
        BTreeMap::new()
    };
    match gather(config, source, &cache, &known, parallelism) {
        Ok(gathered) => {
            let manifest = complete_manifest(config, &gathered)?;
            cache.save(&cache_path)?;
            report::write_run_reports(dir, &manifest)?;
            Ok(RunOutput {
                dir: dir.to_path_buf(),
                manifest,
            })
        }
        Err(Failure { error, gathered }) => {
            let manifest = incomplete_manifest(config, &gathered, &error);
            cache.save(&cache_path)?;
            manifest.save(&manifest_path)?;
            Err(AppError::from(error))
        }
    }
}

/// Runs into `out_root/<run id>`.
pub fn analyze(
    out_root: &Path,
    config: &RunConfig,
    source: &Source<'_>,
    parallelism: usize,
) -> Result<RunOutput, AppError> {
    run_into(&out_root.join(config.run_id()), config, source, parallelism)
}

/// Rebuilds a run from its manifest and cache without touching any backend.
/// Fails with the list of missing cache keys when the cache is incomplete.
pub fn rebuild(manifest: &RunManifest, cache: &SampleCache) -> Result<RunManifest, AppError> {
    let config = &manifest.config;
    let prompt = &config.prompt;
    let expected: BTreeMap<&WordSet, u64> = manifest
        .distributions
        .iter()
        .map(|d| (&d.mask, d.samples))
        .collect();
    let mut table = DistributionTable::new();
    let mut missing = Vec::new();
    for mask in required_masks(prompt.len(), config.level) {
        let variant_id = stream_id(prompt.id(), &mask);
        let m = expected
            .get(&mask)
            .copied()
            .unwrap_or(u64::from(config.samples)) as u32;
        let mut records = Vec::with_capacity(m as usize);
        for j in 1..=m {
            let key = replicate_key(prompt, &variant_id, config.seed, j);
            match cache.get(&key) {
                Some(r) => records.push(r),
                None => missing.push(format!("mask {mask}: {key}")),
            }
        }
        if records.len() == m as usize {
            table.insert(
                mask,
                EmpiricalDistribution::from_records(&records, &config.group_space)?,
            );
        }
    }
    if !missing.is_empty() {
        return Err(AppError::IncompleteReplay { missing });
    }
    let gathered = Gathered {
        distributions: table,
        candidates: manifest.candidate_map(),
    };
    complete_manifest(config, &gathered)
}

/// Replays the run whose manifest is at `manifest_path` into `out_dir`.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> Result<RunManifest, AppError> {
    let manifest = RunManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let cache = SampleCache::load(&dir.join(&manifest.cache_file))?;
    let rebuilt = rebuild(&manifest, &cache)?;
    report::write_run_reports(out_dir, &rebuilt)?;
    cache.save(&out_dir.join(CACHE_FILE))?;
    Ok(rebuilt)
}
