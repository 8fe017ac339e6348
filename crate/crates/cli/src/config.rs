//! Settings resolution: command-line flags override the TOML config file,
//! which overrides the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wordsway_core::{CandidateSelection, GroupSpace, TransmuterConfig};

use crate::error::AppError;

pub const DEFAULT_SAMPLES: u32 = 100;
pub const DEFAULT_LEVEL: usize = 1;
pub const DEFAULT_BOUND_T: f64 = 0.1;
pub const DEFAULT_OUT: &str = "runs";
pub const DEFAULT_TIMEOUT_SECS: u64 = 120;
pub const DEFAULT_RETRIES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Simulated,
    Remote,
    Recorded,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Simulated => "simulated",
            BackendKind::Remote => "remote",
            BackendKind::Recorded => "recorded",
        }
    }
}

/// Every tunable, all optional. Used both for the config file and for the
/// flags given on the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub level: Option<usize>,
    pub group: Option<String>,
    pub samples: Option<u32>,
    pub seed: Option<u64>,
    pub backend: Option<BackendKind>,
    pub adapter_url: Option<String>,
    pub world: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub recorded: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub num_candidates: Option<usize>,
    pub selection: Option<CandidateSelection>,
    pub bound_t: Option<f64>,
    pub groups: Option<Vec<String>>,
    /// Classifier text per group, `{g}` is replaced by the label.
    pub group_template: Option<String>,
    pub timeout_secs: Option<u64>,
    pub retries: Option<u32>,
}

impl Overrides {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let mut o: Overrides = toml::from_str(&text).map_err(|e| AppError::Format {
            path: path.into(),
            message: e.to_string(),
        })?;
        // file paths in a config file are relative to the file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut o.world, &mut o.dictionary, &mut o.recorded, &mut o.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(o)
    }

    /// `self` wins over `other`.
    pub fn or(self, other: Overrides) -> Overrides {
        Overrides {
            level: self.level.or(other.level),
            group: self.group.or(other.group),
            samples: self.samples.or(other.samples),
            seed: self.seed.or(other.seed),
            backend: self.backend.or(other.backend),
            adapter_url: self.adapter_url.or(other.adapter_url),
            world: self.world.or(other.world),
            dictionary: self.dictionary.or(other.dictionary),
            recorded: self.recorded.or(other.recorded),
            out: self.out.or(other.out),
            parallelism: self.parallelism.or(other.parallelism),
            num_candidates: self.num_candidates.or(other.num_candidates),
            selection: self.selection.or(other.selection),
            bound_t: self.bound_t.or(other.bound_t),
            groups: self.groups.or(other.groups),
            group_template: self.group_template.or(other.group_template),
            timeout_secs: self.timeout_secs.or(other.timeout_secs),
            retries: self.retries.or(other.retries),
        }
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub level: usize,
    pub group: String,
    pub samples: u32,
    pub seed: u64,
    pub backend: BackendKind,
    pub adapter_url: Option<String>,
    pub world: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub recorded: Option<PathBuf>,
    pub out: PathBuf,
    pub parallelism: usize,
    pub transmuter: TransmuterConfig,
    pub bound_t: f64,
    /// `None` when the group space should come from the backend.
    pub groups: Option<GroupSpace>,
    pub timeout_secs: u64,
    pub retries: u32,
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, usize::from)
}

impl Settings {
    pub fn resolve(flags: Overrides, config_file: Option<&Path>) -> Result<Self, AppError> {
        let file = match config_file {
            Some(p) => Overrides::load(p)?,
            None => Overrides::default(),
        };
        let o = flags.or(file);
        let transmuter = TransmuterConfig {
            num_candidates: o
                .num_candidates
                .unwrap_or(TransmuterConfig::default().num_candidates),
            candidate_selection: o.selection.unwrap_or_default(),
            ..TransmuterConfig::default()
        };
        transmuter.validate()?;
        let groups = match (o.groups, o.group_template) {
            (None, None) => None,
            (groups, template) => {
                let labels = groups.unwrap_or_else(|| GroupSpace::binary_sex().groups().to_vec());
                Some(match template {
                    Some(t) => {
                        let texts = labels.iter().map(|g| t.replace("{g}", g)).collect();
                        GroupSpace::with_texts(labels, texts)?
                    }
                    None => GroupSpace::new(labels)?,
                })
            }
        };
        let s = Settings {
            level: o.level.unwrap_or(DEFAULT_LEVEL),
            group: o.group.unwrap_or_else(|| "auto".into()),
            samples: o.samples.unwrap_or(DEFAULT_SAMPLES),
            seed: o.seed.unwrap_or(0),
            backend: o.backend.unwrap_or(BackendKind::Simulated),
            adapter_url: o.adapter_url,
            world: o.world,
            dictionary: o.dictionary,
            recorded: o.recorded,
            out: o.out.unwrap_or_else(|| DEFAULT_OUT.into()),
            parallelism: o.parallelism.unwrap_or_else(default_parallelism),
            transmuter,
            bound_t: o.bound_t.unwrap_or(DEFAULT_BOUND_T),
            groups,
            timeout_secs: o.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS),
            retries: o.retries.unwrap_or(DEFAULT_RETRIES),
        };
        if s.level == 0 {
            return Err(AppError::Config("level must be at least 1".into()));
        }
        if s.samples == 0 {
            return Err(AppError::Config("samples must be at least 1".into()));
        }
        if s.parallelism == 0 {
            return Err(AppError::Config("parallelism must be at least 1".into()));
        }
        if !(s.bound_t.is_finite() && s.bound_t > 0.0) {
            return Err(AppError::Config("bound-t must be positive".into()));
        }
        Ok(s)
    }
}
