//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wordsway::files::{load_dictionary, load_slots, load_world, RecordedTable};
use wordsway::manifest::BackendInfo;
use wordsway::runner::Source;
use wordsway::sweep::{
    replay_sweep, run_sweep, AggregateRow, PromptScore, SweepSettings, TemplateGrid,
};
use wordsway_core::bound::concentration_bound;
use wordsway_core::bound::BoundParams;
use wordsway_core::exact::influence_exact;
use wordsway_core::influence::influence_with;
use wordsway_core::shapley::shapley_oracle;
use wordsway_core::subsets::required_masks;
use wordsway_core::{
    influence, influence_all, normalize_and_tokenize, DistributionTable, EmpiricalDistribution,
    GroupSampler, GroupSpace, Prompt, SamplingPlan, SimulatedWorld, StubTransmuter, Transmuter,
    TransmuterConfig, WordSet,
};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

type Outcome = Result<String, String>;

struct Criterion {
    number: u32,
    name: &'static str,
    check: fn() -> Outcome,
    limit: Duration,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// independent brute-force oracle for simulated worlds

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn choose(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Exact `P_S(first group)` for a logistic world whose transmuter picks a
/// uniformly random combination of per-word replacement lists.
fn oracle_probability(
    words: &[String],
    bias: &BTreeMap<String, f64>,
    repl: &BTreeMap<String, Vec<String>>,
    mask: u32,
) -> f64 {
    let b = |w: &str| bias.get(w).copied().unwrap_or(0.0);
    let mut partials = vec![0.0f64];
    for (j, w) in words.iter().enumerate() {
        if mask & (1 << j) == 0 {
            for p in &mut partials {
                *p += b(w);
            }
        } else {
            let options = &repl[w];
            partials = partials
                .iter()
                .flat_map(|p| options.iter().map(move |o| p + b(o)))
                .collect();
        }
    }
    partials.iter().map(|&x| sigmoid(x)).sum::<f64>() / partials.len() as f64
}

/// Exact `TI(p, i, r, first group)` by bitmask enumeration.
fn oracle_influence(k: usize, pivot: usize, level: usize, prob: &dyn Fn(u32) -> f64) -> f64 {
    let bit = 1u32 << (pivot - 1);
    (0u32..1 << k)
        .filter(|s| s & bit == 0 && (s.count_ones() as usize) < level)
        .map(|s| (prob(s) - prob(s | bit)) / choose(k - 1, s.count_ones() as usize))
        .sum()
}

struct RandomWorld {
    prompt: Prompt,
    world: SimulatedWorld,
    stub: StubTransmuter,
    bias: BTreeMap<String, f64>,
    repl: BTreeMap<String, Vec<String>>,
}

fn random_world(rng: &mut ChaCha8Rng, k: usize, max_candidates: usize, scale: f64) -> RandomWorld {
    let words: Vec<String> = (0..k).map(|j| format!("w{j}")).collect();
    let mut bias = BTreeMap::new();
    let mut repl = BTreeMap::new();
    for (j, w) in words.iter().enumerate() {
        bias.insert(w.clone(), rng.random_range(-scale..scale));
        let n = rng.random_range(1..=max_candidates);
        let options: Vec<String> = (0..n).map(|c| format!("r{j}x{c}")).collect();
        for o in &options {
            bias.insert(o.clone(), rng.random_range(-scale..scale));
        }
        repl.insert(w.clone(), options);
    }
    RandomWorld {
        prompt: normalize_and_tokenize(&words.join(" ")).unwrap(),
        world: SimulatedWorld::new(GroupSpace::binary_sex(), bias.clone()).unwrap(),
        stub: StubTransmuter::new(repl.clone()),
        bias,
        repl,
    }
}

// ---------------------------------------------------------------------------

fn recorded_doctor_table() -> Outcome {
    let table = RecordedTable::load(&fixture("doctor_recorded.json")).map_err(|e| e.to_string())?;
    let prompt = normalize_and_tokenize(table.prompt.as_deref().unwrap()).unwrap();
    let dists: DistributionTable = table
        .counts()?
        .into_iter()
        .map(|(m, c)| (m, EmpiricalDistribution::from_counts(c).unwrap()))
        .collect();
    let male = table.groups.index_of("male").unwrap();
    let female = table.groups.index_of("female").unwrap();

    let expected_female = [
        "0.160", "0.133", "0.267", "0.533", "0.200", "0.200", "0.000",
    ];
    let masks =
        std::iter::once(WordSet::empty()).chain((1..=6).map(|i| WordSet::from_indices([i])));
    for (mask, want) in masks.zip(expected_female) {
        let got = format!("{:.3}", dists[&mask].probability(female));
        ensure(got == want, || {
            format!("P(female | {mask}) = {got}, expected {want}")
        })?;
    }

    let expected = ["-0.027", "0.107", "0.373", "0.040", "0.040", "-0.160"];
    let mut got_all = Vec::new();
    for (i, want) in (1..=6).zip(expected) {
        let s = influence(&prompt, i, 1, male, &table.groups, &dists).map_err(|e| e.to_string())?;
        let got = format!("{:.3}", s.value);
        ensure(got == want, || {
            format!("influence of {:?} = {got}, expected {want}", s.word)
        })?;
        got_all.push(got);
    }
    Ok(format!("male influences {}", got_all.join(" ")))
}

fn ceo_interaction() -> Outcome {
    let prompt = normalize_and_tokenize("the ceo of a fortune 500 company").unwrap();
    let world = load_world(&fixture("ceo_world.json")).map_err(|e| e.to_string())?;
    let stub = load_dictionary(&fixture("ceo_dictionary.json")).map_err(|e| e.to_string())?;
    let plan = SamplingPlan {
        transmuter: &stub,
        sampler: &world,
        config: TransmuterConfig::default(),
        samples: 2000,
        base_seed: 2024,
    };
    let r1 = influence_all(&prompt, 1, 0, &plan).map_err(|e| e.to_string())?;
    ensure(r1.iter().all(|s| s.value == 0.0), || {
        format!(
            "r=1 scores not all zero: {:?}",
            r1.iter().map(|s| s.value).collect::<Vec<_>>()
        )
    })?;

    let r2 = influence_all(&prompt, 2, 0, &plan).map_err(|e| e.to_string())?;
    let mut shown = Vec::new();
    for s in &r2 {
        let designated = s.word == "ceo" || s.word == "company";
        // joint replacement drops P(male) from 1 to 1/2, weighted by 1/C(6,1)
        let exact = if designated { 0.5 / 6.0 } else { 0.0 };
        if designated {
            ensure(s.value != 0.0 && (s.value - exact).abs() < 0.02, || {
                format!("{} at r=2 scored {} (exact {exact:.4})", s.word, s.value)
            })?;
            shown.push(format!("{}={:.4}", s.word, s.value));
        } else {
            ensure(s.value == 0.0, || {
                format!("{} at r=2 scored {}", s.word, s.value)
            })?;
        }
    }
    Ok(format!(
        "r=1 all zero; r=2 nonzero only for {}",
        shown.join(", ")
    ))
}

fn oracle_equivalence() -> Outcome {
    let mut passed = 0;
    let mut worst = 0.0f64;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + trial);
        let k = rng.random_range(1..=5);
        let level = rng.random_range(1..=k.min(3));
        let w = random_world(&mut rng, k, 4, 1.5);
        // large enough that no combination is truncated away
        let config = TransmuterConfig {
            num_candidates: 4usize.pow(level as u32),
            ..TransmuterConfig::default()
        };
        let plan = SamplingPlan {
            transmuter: &w.stub,
            sampler: &w.world,
            config,
            samples: 10_000,
            base_seed: trial,
        };
        let scores = influence_all(&w.prompt, level, 0, &plan).map_err(|e| e.to_string())?;
        let prob = |mask: u32| oracle_probability(w.prompt.words(), &w.bias, &w.repl, mask);
        let err = scores
            .iter()
            .map(|s| (s.value - oracle_influence(k, s.word_index, level, &prob)).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
        if err <= 0.05 {
            passed += 1;
        }
    }
    ensure(passed >= 95, || {
        format!("{passed}/100 trials within 0.05 (worst error {worst:.4})")
    })?;
    Ok(format!(
        "{passed}/100 trials within 0.05, worst error {worst:.4}"
    ))
}

fn concentration() -> Outcome {
    // k = 3, r = 1; the pivot's replacements move P(male) from 0.55 to about 0.41
    let prompt = normalize_and_tokenize("alpha beta gamma").unwrap();
    let bias = BTreeMap::from([
        ("alpha".to_string(), 0.2),
        ("a1".into(), -0.2),
        ("a2".into(), -0.6),
    ]);
    let repl = BTreeMap::from([(
        "alpha".to_string(),
        vec!["a1".to_string(), "a2".to_string()],
    )]);
    let world = SimulatedWorld::new(GroupSpace::binary_sex(), bias.clone()).unwrap();
    let stub = StubTransmuter::new(repl.clone());
    let exact = oracle_influence(3, 1, 1, &|m| {
        oracle_probability(prompt.words(), &bias, &repl, m)
    });

    let mut lines = Vec::new();
    let mut checked = 0;
    for m in [100u32, 1_000, 10_000] {
        let mut exceed = [0u32; 2];
        for trial in 0..1000u64 {
            let plan = SamplingPlan {
                transmuter: &stub,
                sampler: &world,
                config: TransmuterConfig::default(),
                samples: m,
                base_seed: 77_000_000 + u64::from(m) * 10_000 + trial,
            };
            let (p0, _, _) = plan
                .distribution(&prompt, &WordSet::empty())
                .map_err(|e| e.to_string())?;
            let (p1, _, _) = plan
                .distribution(&prompt, &WordSet::from_indices([1]))
                .map_err(|e| e.to_string())?;
            let est = p0.probability(0) - p1.probability(0);
            for (n, t) in [0.1, 0.2].into_iter().enumerate() {
                if (est - exact).abs() > t {
                    exceed[n] += 1;
                }
            }
        }
        for (n, t) in [0.1, 0.2].into_iter().enumerate() {
            let bound = concentration_bound(&BoundParams::new(t, u64::from(m), 3, 1).unwrap());
            let freq = f64::from(exceed[n]) / 1000.0;
            if bound < 1.0 {
                checked += 1;
                ensure(freq <= bound, || {
                    format!("t={t} m={m}: exceedance {freq} above bound {bound:.3e}")
                })?;
            }
            lines.push(format!("t={t},m={m}:{freq}<={bound:.2e}"));
        }
    }
    Ok(format!("{checked} cells checked; {}", lines.join(" ")))
}

fn shapley_identity() -> Outcome {
    let mut worst = 0.0f64;
    for n in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5_000 + n);
        let k = rng.random_range(1..=6);
        let w = random_world(&mut rng, k, 3, 2.0);
        let config = TransmuterConfig::default();
        let mut values: BTreeMap<WordSet, f64> = BTreeMap::new();
        for mask in required_masks(k, k) {
            let p = if mask.is_empty() {
                w.world.exact_probability(w.prompt.words())[0]
            } else {
                let c = w
                    .stub
                    .propose(&w.prompt, &mask, &config)
                    .map_err(|e| e.to_string())?;
                w.world
                    .exact_mixture(&w.prompt, &c, config.candidate_selection)[0]
            };
            values.insert(mask, p);
        }
        for i in 1..=k {
            let (ti, _) = influence_with(k, i, k, |s| Ok(values[s])).map_err(|e| e.to_string())?;
            let phi = shapley_oracle(k, i, |s| values[s]).map_err(|e| e.to_string())?;
            let err = (ti + k as f64 * phi).abs();
            worst = worst.max(err);
            ensure(err <= 1e-9, || {
                format!(
                    "world {n}, word {i}: TI {ti} vs -k*phi {}",
                    -(k as f64) * phi
                )
            })?;
        }
    }
    Ok(format!("50 worlds, max |TI + k*phi| = {worst:.2e}"))
}

fn exact_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut binary = 0;
    for n in 0..10_000 {
        let k = rng.random_range(1..=5);
        let l = if n % 2 == 0 {
            2
        } else {
            rng.random_range(3..=4)
        };
        let level = rng.random_range(1..=k);
        let mut table = DistributionTable::new();
        for mask in required_masks(k, level) {
            let mut counts: Vec<u64> = (0..l).map(|_| rng.random_range(0..40)).collect();
            if counts.iter().all(|&c| c == 0) {
                counts[0] = 1;
            }
            table.insert(mask, EmpiricalDistribution::from_counts(counts).unwrap());
        }
        for i in 1..=k {
            let per_group: Vec<BigRational> = (0..l)
                .map(|g| influence_exact(k, i, level, g, &table))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let total = per_group.iter().fold(BigRational::zero(), |a, b| a + b);
            ensure(total.is_zero(), || {
                format!("table {n}, word {i}: group scores sum to {total}")
            })?;
            if l == 2 {
                ensure(per_group[0] == -per_group[1].clone(), || {
                    format!("table {n}, word {i}: not antisymmetric")
                })?;
            }
        }
        if l == 2 {
            binary += 1;
        }
    }
    Ok(format!(
        "10000 tables ({binary} binary): zero-sum and antisymmetry exact"
    ))
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                if p.file_name().is_some_and(|n| n != "replay") {
                    stack.push(p);
                }
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn sweep_mechanics() -> Outcome {
    let grid = TemplateGrid {
        template: "a [ADJECTIVE] [PERSON] at the [PLACE]".into(),
        slots: load_slots(&fixture("slots.json")).map_err(|e| e.to_string())?,
    };
    ensure(grid.size() == 150, || format!("grid size {}", grid.size()))?;
    let world = load_world(&fixture("sweep_world.json")).map_err(|e| e.to_string())?;
    let stub = load_dictionary(&fixture("sweep_dictionary.json")).map_err(|e| e.to_string())?;
    let settings = SweepSettings {
        group_space: world.group_space().clone(),
        level: 1,
        samples: 200,
        seed: 7,
        group: "male".into(),
        transmuter: TransmuterConfig::default(),
        bound_t: 0.1,
        backend: BackendInfo {
            kind: "simulated".into(),
            sampler: world.backend_id(),
            transmuter: Some(stub.backend_id()),
            adapter_url: None,
        },
    };
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let source = Source::Sampled {
        sampler: &world,
        transmuter: &stub,
    };
    let parallelism = std::thread::available_parallelism().map_or(1, usize::from);
    let out =
        run_sweep(tmp.path(), &grid, &settings, &source, parallelism).map_err(|e| e.to_string())?;
    ensure(
        out.manifest.runs.len() == 150 && out.manifest.failures.is_empty(),
        || {
            format!(
                "{} runs, {} failures",
                out.manifest.runs.len(),
                out.manifest.failures.len()
            )
        },
    )?;

    // recompute averages from the per-prompt CSV
    let mut per: csv::Reader<fs::File> =
        csv::Reader::from_path(out.dir.join("per_prompt.csv")).map_err(|e| e.to_string())?;
    let mut sums: BTreeMap<(String, String, String), (f64, usize)> = BTreeMap::new();
    let mut prompts = std::collections::BTreeSet::new();
    for row in per.deserialize::<PromptScore>() {
        let row = row.map_err(|e| e.to_string())?;
        prompts.insert(row.prompt_index);
        let e = sums.entry((row.slot, row.word, row.group)).or_default();
        e.0 += row.influence;
        e.1 += 1;
    }
    ensure(prompts.len() == 150, || {
        format!("{} prompts in per_prompt.csv", prompts.len())
    })?;
    let mut agg: csv::Reader<fs::File> =
        csv::Reader::from_path(out.dir.join("aggregate.csv")).map_err(|e| e.to_string())?;
    let rows: Vec<AggregateRow> = agg
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure(rows.len() == sums.len(), || {
        format!("{} aggregate rows, {} keys", rows.len(), sums.len())
    })?;
    let mut worst = 0.0f64;
    for r in &rows {
        let (sum, n) = sums[&(r.slot.clone(), r.word.clone(), r.group.clone())];
        ensure(n == r.prompts, || {
            format!("{}: {} prompts vs {n}", r.word, r.prompts)
        })?;
        worst = worst.max((sum / n as f64 - r.mean_influence).abs());
    }
    ensure(worst <= 1e-12, || {
        format!("aggregate differs from recomputed mean by {worst:e}")
    })?;

    let replayed = tmp.path().join("replayed");
    replay_sweep(&out.dir.join("sweep.json"), &replayed).map_err(|e| e.to_string())?;
    let files = files_under(&out.dir);
    ensure(files == files_under(&replayed), || {
        "replay wrote a different file set".into()
    })?;
    for f in &files {
        ensure(
            fs::read(out.dir.join(f)).unwrap() == fs::read(replayed.join(f)).unwrap(),
            || format!("{} differs after replay", f.display()),
        )?;
    }
    Ok(format!(
        "150 prompts, {} aggregate rows within {worst:.1e}, {} files replayed byte-identical",
        rows.len(),
        files.len()
    ))
}

fn main() {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion {
            number: 1,
            name: "recorded doctor table",
            check: recorded_doctor_table,
            limit: secs(1),
        },
        Criterion {
            number: 2,
            name: "two-word interaction",
            check: ceo_interaction,
            limit: secs(60),
        },
        Criterion {
            number: 3,
            name: "oracle equivalence",
            check: oracle_equivalence,
            limit: secs(300),
        },
        Criterion {
            number: 4,
            name: "concentration bound",
            check: concentration,
            limit: secs(600),
        },
        Criterion {
            number: 5,
            name: "full-level shapley identity",
            check: shapley_identity,
            limit: secs(60),
        },
        Criterion {
            number: 6,
            name: "exact antisymmetry and zero-sum",
            check: exact_identities,
            limit: secs(600),
        },
        Criterion {
            number: 7,
            name: "sweep mechanics",
            check: sweep_mechanics,
            limit: secs(120),
        },
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for Criterion {
        number: n,
        name,
        check,
        limit,
    } in criteria
    {
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| name.contains(f.as_str()) || f == &n.to_string())
        {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| {
            if elapsed <= limit {
                Ok(detail)
            } else {
                Err(format!("took {elapsed:.1?}, limit {limit:?}; {detail}"))
            }
        });
        match result {
            Ok(detail) => println!("criterion {n} PASS {name} ({elapsed:.2?}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} FAIL {name} ({elapsed:.2?}): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
