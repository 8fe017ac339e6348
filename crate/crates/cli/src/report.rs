//! Run outputs: manifest, CSV tables and the human readable summary.

use std::fmt::Write as _;
use std::path::Path;

use wordsway_core::{InfluenceScore, WordSet};

use crate::cache::write_atomic;
use crate::error::AppError;
use crate::manifest::{RunManifest, MANIFEST_FILE};

pub const SCORES_FILE: &str = "scores.csv";
pub const DISTRIBUTIONS_FILE: &str = "distributions.csv";

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn probability_of(manifest: &RunManifest, mask: &WordSet, group: &str) -> Option<f64> {
    let g = manifest.config.group_space.index_of(group)?;
    let d = manifest.distributions.iter().find(|d| &d.mask == mask)?;
    Some(d.counts[g] as f64 / d.samples as f64)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per (word, group).
pub fn scores_csv(manifest: &RunManifest) -> Vec<u8> {
    let rows = manifest
        .scores
        .iter()
        .map(|s| {
            let replaced = WordSet::from_indices([s.word_index]);
            vec![
                s.word_index.to_string(),
                s.word.clone(),
                s.group.clone(),
                s.level.to_string(),
                s.value.to_string(),
                opt(probability_of(manifest, &replaced, &s.group)),
                opt(probability_of(manifest, &WordSet::empty(), &s.group)),
                opt(s.confidence.map(|c| c.t)),
                opt(s.confidence.map(|c| c.delta)),
                opt(s.confidence.map(|c| c.delta_hoeffding)),
            ]
        })
        .collect();
    csv_bytes(
        &[
            "word_index",
            "word",
            "group",
            "level",
            "influence",
            "p_replaced",
            "p_original",
            "bound_t",
            "bound_delta",
            "bound_delta_tight",
        ],
        rows,
    )
}

pub fn distributions_csv(manifest: &RunManifest) -> Vec<u8> {
    let join = |v: Vec<String>| v.join(";");
    let rows = manifest
        .distributions
        .iter()
        .map(|d| {
            vec![
                d.mask.to_string(),
                d.variant_id.clone(),
                d.samples.to_string(),
                join(d.counts.iter().map(u64::to_string).collect()),
                join(
                    d.counts
                        .iter()
                        .map(|&c| (c as f64 / d.samples as f64).to_string())
                        .collect(),
                ),
            ]
        })
        .collect();
    csv_bytes(
        &["mask", "variant_id", "samples", "counts", "probabilities"],
        rows,
    )
}

/// Writes `manifest.json`, `scores.csv` and `distributions.csv` into `dir`.
pub fn write_run_reports(dir: &Path, manifest: &RunManifest) -> Result<(), AppError> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    manifest.save(&dir.join(MANIFEST_FILE))?;
    write_atomic(&dir.join(SCORES_FILE), &scores_csv(manifest))?;
    write_atomic(&dir.join(DISTRIBUTIONS_FILE), &distributions_csv(manifest))?;
    Ok(())
}

fn reported(manifest: &RunManifest) -> Vec<&str> {
    match &manifest.report_group {
        Some(g) => vec![g.as_str()],
        None => manifest
            .config
            .group_space
            .groups()
            .iter()
            .map(String::as_str)
            .collect(),
    }
}

fn score_of<'a>(
    manifest: &'a RunManifest,
    word_index: usize,
    group: &str,
) -> Option<&'a InfluenceScore> {
    manifest
        .scores
        .iter()
        .find(|s| s.word_index == word_index && s.group == group)
}

/// Plain text table: P(g) with each word replaced, then its influence.
pub fn render_summary(manifest: &RunManifest) -> String {
    let cfg = &manifest.config;
    let groups = cfg.group_space.groups();
    let shown = reported(manifest);
    let mut out = String::new();
    let _ = writeln!(out, "prompt: {}", cfg.prompt.normalized());
    let _ = writeln!(out, "run:    {}", manifest.run_id);
    let samples = manifest
        .distributions
        .iter()
        .map(|d| d.samples)
        .min()
        .unwrap_or(0);
    let _ = writeln!(
        out,
        "level {}, {} samples per distribution",
        cfg.level, samples
    );
    let width = cfg
        .prompt
        .words()
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(0)
        .max(10);

    let mut header = format!("{:<width$}", "replaced");
    for g in groups {
        let _ = write!(header, "  {:>10}", format!("P({g})"));
    }
    for g in &shown {
        let _ = write!(header, "  {:>10}", format!("I({g})"));
    }
    let _ = writeln!(out, "{header}");

    let mut row = format!("{:<width$}", "(none)");
    for g in groups {
        let _ = write!(
            row,
            "  {:>10}",
            fmt3(probability_of(manifest, &WordSet::empty(), g))
        );
    }
    let _ = writeln!(out, "{}", row.trim_end());
    for (i, word) in cfg.prompt.words().iter().enumerate() {
        let i = i + 1;
        let mut row = format!("{word:<width$}");
        for g in groups {
            let p = probability_of(manifest, &WordSet::from_indices([i]), g);
            let _ = write!(row, "  {:>10}", fmt3(p));
        }
        for g in &shown {
            let _ = write!(
                row,
                "  {:>10}",
                fmt3(score_of(manifest, i, g).map(|s| s.value))
            );
        }
        let _ = writeln!(out, "{}", row.trim_end());
    }
    if let Some(c) = manifest.scores.first().and_then(|s| s.confidence) {
        let _ = writeln!(
            out,
            "P(|error| >= {}) <= {:.3e} per score (tight: {:.3e})",
            c.t, c.delta, c.delta_hoeffding
        );
    }
    out
}

fn fmt3(v: Option<f64>) -> String {
    match v {
        // avoid printing -0.000
        Some(x) if x.abs() < 5e-4 => "0.000".into(),
        Some(x) => format!("{x:.3}"),
        None => "-".into(),
    }
}
