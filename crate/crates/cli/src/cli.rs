//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use wordsway_core::{
    normalize_and_tokenize, CandidateSelection, GroupSampler, GroupSpace, SimulatedWorld,
    StubTransmuter, Transmuter,
};

use crate::config::{BackendKind, Overrides, Settings};
use crate::error::{AppError, ExitCode};
use crate::files::{self, RecordedTable};
use crate::manifest::{manifest_kind, BackendInfo, RunConfig};
use crate::remote::{AdapterClient, RemoteSampler, RemoteTransmuter};
use crate::report;
use crate::runner::{self, Source};
use crate::sweep::{self, SweepSettings, TemplateGrid};

#[derive(Debug, Parser)]
#[command(
    name = "wordsway",
    version,
    about = "Word influence on the group a text-to-image model depicts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every word of one prompt.
    Analyze {
        #[arg(long)]
        prompt: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Analyze every prompt of a template grid and average per word.
    Sweep {
        /// Template with `[NAME]` placeholders.
        #[arg(long)]
        template: String,
        /// JSON map placeholder -> [words].
        #[arg(long)]
        slots: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Rebuild the reports of a run or sweep from its cache alone.
    Replay {
        /// `manifest.json` of a run or `sweep.json` of a sweep.
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory, `<run dir>/replay` by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Interaction level r: subsets of up to r-1 other words are replaced.
    #[arg(long)]
    level: Option<usize>,
    /// Group to report: a label, `auto` or `all`.
    #[arg(long)]
    group: Option<String>,
    /// Samples per distribution.
    #[arg(long)]
    samples: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["simulated", "remote", "recorded"])]
    backend: Option<String>,
    #[arg(long)]
    adapter_url: Option<String>,
    /// Simulated world JSON.
    #[arg(long)]
    world: Option<PathBuf>,
    /// Stub transmuter dictionary JSON.
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// Recorded distribution table JSON.
    #[arg(long)]
    recorded: Option<PathBuf>,
    /// TOML file with any of these settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory that receives run directories.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Transmutation candidates per mask.
    #[arg(long)]
    num_candidates: Option<usize>,
    #[arg(long, value_parser = ["uniform_top_n", "score_weighted"])]
    selection: Option<String>,
    /// Deviation t used for the reported confidence bound.
    #[arg(long)]
    bound_t: Option<f64>,
    /// Comma separated group labels.
    #[arg(long, value_delimiter = ',')]
    groups: Option<Vec<String>>,
    /// Classifier text per group, e.g. "a photo of a {g} person".
    #[arg(long)]
    group_template: Option<String>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    retries: Option<u32>,
}

impl RunArgs {
    fn settings(self) -> Result<Settings, AppError> {
        let flags = Overrides {
            level: self.level,
            group: self.group,
            samples: self.samples,
            seed: self.seed,
            backend: self.backend.map(|b| match b.as_str() {
                "remote" => BackendKind::Remote,
                "recorded" => BackendKind::Recorded,
                _ => BackendKind::Simulated,
            }),
            adapter_url: self.adapter_url,
            world: self.world,
            dictionary: self.dictionary,
            recorded: self.recorded,
            out: self.out,
            parallelism: self.parallelism,
            num_candidates: self.num_candidates,
            selection: self.selection.map(|s| match s.as_str() {
                "score_weighted" => CandidateSelection::ScoreWeighted,
                _ => CandidateSelection::UniformTopN,
            }),
            bound_t: self.bound_t,
            groups: self.groups,
            group_template: self.group_template,
            timeout_secs: self.timeout_secs,
            retries: self.retries,
        };
        Settings::resolve(flags, self.config.as_deref())
    }
}

/// Backends built from settings.
enum Backends {
    Simulated {
        world: SimulatedWorld,
        transmuter: StubTransmuter,
    },
    Remote {
        sampler: RemoteSampler,
        transmuter: Box<dyn Transmuter>,
        url: String,
    },
    Recorded(RecordedTable),
}

fn require<'a>(
    p: &'a Option<PathBuf>,
    flag: &str,
    backend: BackendKind,
) -> Result<&'a Path, AppError> {
    p.as_deref().ok_or_else(|| {
        AppError::Config(format!(
            "--{flag} is required with --backend {}",
            backend.as_str()
        ))
    })
}

impl Backends {
    fn build(s: &Settings) -> Result<Self, AppError> {
        let backends = match s.backend {
            BackendKind::Simulated => Backends::Simulated {
                world: files::load_world(require(&s.world, "world", s.backend)?)?,
                transmuter: files::load_dictionary(require(
                    &s.dictionary,
                    "dictionary",
                    s.backend,
                )?)?,
            },
            BackendKind::Recorded => Backends::Recorded(RecordedTable::load(require(
                &s.recorded,
                "recorded",
                s.backend,
            )?)?),
            BackendKind::Remote => {
                let url = s.adapter_url.clone().ok_or_else(|| {
                    AppError::Config("--adapter-url is required with --backend remote".into())
                })?;
                let client =
                    || AdapterClient::new(&url, Duration::from_secs(s.timeout_secs), s.retries);
                let groups = s.groups.clone().unwrap_or_else(GroupSpace::binary_sex);
                let transmuter: Box<dyn Transmuter> = match &s.dictionary {
                    Some(p) => Box::new(files::load_dictionary(p)?),
                    None => Box::new(RemoteTransmuter::new(client())),
                };
                Backends::Remote {
                    sampler: RemoteSampler::new(client(), groups),
                    transmuter,
                    url,
                }
            }
        };
        let own = backends.source();
        if let Some(g) = &s.groups {
            if own.group_space().groups() != g.groups() {
                return Err(AppError::Config(format!(
                    "--groups {:?} disagree with the backend's groups {:?}",
                    g.groups(),
                    own.group_space().groups()
                )));
            }
        }
        Ok(backends)
    }

    fn source(&self) -> Source<'_> {
        match self {
            Backends::Simulated { world, transmuter } => Source::Sampled {
                sampler: world,
                transmuter,
            },
            Backends::Remote {
                sampler,
                transmuter,
                ..
            } => Source::Sampled {
                sampler,
                transmuter: transmuter.as_ref(),
            },
            Backends::Recorded(t) => Source::Recorded(t),
        }
    }

    fn info(&self, kind: BackendKind) -> BackendInfo {
        let (sampler, transmuter, adapter_url) = match self {
            Backends::Simulated { world, transmuter } => {
                (world.backend_id(), Some(transmuter.backend_id()), None)
            }
            Backends::Remote {
                sampler,
                transmuter,
                url,
            } => (
                sampler.backend_id(),
                Some(transmuter.backend_id()),
                Some(url.clone()),
            ),
            Backends::Recorded(t) => (t.backend_id(), None, None),
        };
        BackendInfo {
            kind: kind.as_str().into(),
            sampler,
            transmuter,
            adapter_url,
        }
    }
}

fn sweep_settings(s: &Settings, backends: &Backends) -> SweepSettings {
    SweepSettings {
        group_space: backends.source().group_space().clone(),
        level: s.level,
        // a recorded table fixes its own sample counts
        samples: s.samples,
        seed: s.seed,
        group: s.group.clone(),
        transmuter: s.transmuter.clone(),
        bound_t: s.bound_t,
        backend: backends.info(s.backend),
    }
}

fn analyze(prompt: &str, run: RunArgs) -> Result<(), AppError> {
    let s = run.settings()?;
    let backends = Backends::build(&s)?;
    let prompt = normalize_and_tokenize(prompt)?;
    if let Backends::Recorded(RecordedTable {
        prompt: Some(p), ..
    }) = &backends
    {
        if normalize_and_tokenize(p)?.words() != prompt.words() {
            return Err(AppError::Config(format!(
                "recorded table is for {p:?}, not {:?}",
                prompt.raw()
            )));
        }
    }
    let config: RunConfig = sweep_settings(&s, &backends).run_config(prompt.raw())?;
    let out = runner::analyze(&s.out, &config, &backends.source(), s.parallelism)?;
    print!("{}", report::render_summary(&out.manifest));
    eprintln!("wrote {}", out.dir.display());
    Ok(())
}

fn run_sweep(template: &str, slots: &Path, run: RunArgs) -> Result<(), AppError> {
    let s = run.settings()?;
    let backends = Backends::build(&s)?;
    let grid = TemplateGrid {
        template: template.into(),
        slots: files::load_slots(slots)?,
    };
    let out = sweep::run_sweep(
        &s.out,
        &grid,
        &sweep_settings(&s, &backends),
        &backends.source(),
        s.parallelism,
    )?;
    let shown = match s.group.as_str() {
        "all" | "auto" => None,
        g => Some(g),
    };
    print!("{}", sweep::render_aggregate(&out.aggregate, shown));
    eprintln!(
        "{} prompts, {} failed; wrote {}",
        out.manifest.runs.len(),
        out.manifest.failures.len(),
        out.dir.display()
    );
    for entry in out.manifest.runs.iter().filter(|e| e.error.is_some()) {
        eprintln!(
            "  #{} {:?}: {}",
            entry.index,
            entry.expansion.prompt,
            entry.error.as_deref().unwrap_or("")
        );
    }
    if !out.manifest.failures.is_empty() {
        return Err(AppError::Backend(wordsway_core::Error::Protocol(format!(
            "{} of {} prompts failed",
            out.manifest.failures.len(),
            out.manifest.runs.len()
        ))));
    }
    Ok(())
}

fn replay(manifest: &Path, out: Option<PathBuf>) -> Result<(), AppError> {
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let out = out.unwrap_or_else(|| dir.join("replay"));
    if manifest_kind(manifest)? == "sweep" {
        let r = sweep::replay_sweep(manifest, &out)?;
        print!("{}", sweep::render_aggregate(&r.aggregate, None));
    } else {
        let m = runner::replay(manifest, &out)?;
        print!("{}", report::render_summary(&m));
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

/// Runs the command line and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::Config as i32
            } else {
                0
            };
        }
    };
    let result = match cli.command {
        Command::Analyze { prompt, run } => analyze(&prompt, run),
        Command::Sweep {
            template,
            slots,
            run,
        } => run_sweep(&template, &slots, run),
        Command::Replay { manifest, out } => replay(&manifest, out),
    };
    match result {
        Ok(()) => ExitCode::Success as i32,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as i32
        }
    }
}
