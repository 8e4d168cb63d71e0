//! Config-file parsing and flag merging. Every flag has a key of the same
//! name (snake_case) in the TOML config; flags win.

use std::path::{Path, PathBuf};

use maskrl::instance_file::{Instance, InstanceFile};
use maskrl::instances::{appendix_e_instance, random_instance, BENCH_EPISODES, SINK};
use maskrl::report::sha256_hex;
use maskrl::rng::{stream, Purpose};
use maskrl::sim::{ContextSchedule, LearnerKind};
use maskrl::{ContextDistribution, Dims};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::{GapArgs, InstanceArgs, RunArgs};

const DEFAULT_OUT: &str = "maskrl-out";
const DEFAULT_P_GRID: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    instance: Option<String>,
    rho: Option<f64>,
    states: Option<usize>,
    actions: Option<usize>,
    horizon: Option<usize>,
    contexts: Option<usize>,
    sparsity: Option<f64>,
    instance_seed: Option<u64>,
    learners: Option<Vec<String>>,
    episodes: Option<u64>,
    seeds: Option<u64>,
    seed_list: Option<Vec<u64>>,
    delta: Option<f64>,
    delta_prime: Option<f64>,
    bonus_scale: Option<f64>,
    schedule: Option<String>,
    sequence: Option<PathBuf>,
    order: Option<Vec<usize>>,
    pac_every: Option<u64>,
    diagnostics: Option<bool>,
    plot: Option<bool>,
    sequential: Option<bool>,
    out: Option<PathBuf>,
    p_grid: Option<Vec<f64>>,
}

/// Loads the config file; relative paths inside it resolve against its
/// directory.
fn load_file(path: Option<&Path>) -> Result<(FileConfig, PathBuf), CliError> {
    let Some(path) = path else {
        return Ok((FileConfig::default(), PathBuf::new()));
    };
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?;
    let cfg: FileConfig =
        toml::from_str(&text).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn rebase(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p
    }
}

/// Where the instance comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSettings {
    Bench {
        rho: f64,
    },
    Random {
        dims: Dims,
        contexts: usize,
        sparsity: f64,
        seed: u64,
    },
    File(PathBuf),
}

impl InstanceSettings {
    pub fn from_path(path: &Path) -> Self {
        InstanceSettings::File(path.to_path_buf())
    }

    /// Flags over file values over defaults.
    fn merge(args: &InstanceArgs, file: &FileConfig, base: &Path) -> Result<Self, CliError> {
        let name = args.instance.clone().or_else(|| file.instance.clone());
        let from_file = args.instance.is_none() && file.instance.is_some();
        match name.as_deref().unwrap_or("appendix_e") {
            "appendix_e" => {
                let rho = args.rho.or(file.rho).unwrap_or(0.5);
                if !(rho > 0.0 && rho < 1.0) {
                    return Err(CliError::config(format!("rho = {rho} outside (0, 1)")));
                }
                Ok(InstanceSettings::Bench { rho })
            }
            "random" => {
                let dims = Dims::new(
                    args.states.or(file.states).unwrap_or(5),
                    args.actions.or(file.actions).unwrap_or(3),
                    args.horizon.or(file.horizon).unwrap_or(5),
                );
                Ok(InstanceSettings::Random {
                    dims,
                    contexts: args.contexts.or(file.contexts).unwrap_or(3),
                    sparsity: args.sparsity.or(file.sparsity).unwrap_or(0.6),
                    seed: args.instance_seed.or(file.instance_seed).unwrap_or(0),
                })
            }
            path => {
                let path = PathBuf::from(path);
                let path = if from_file { rebase(base, path) } else { path };
                Ok(InstanceSettings::File(path))
            }
        }
    }

    pub fn from_args(args: &InstanceArgs, _config: Option<&Path>) -> Result<Self, CliError> {
        Self::merge(args, &FileConfig::default(), Path::new(""))
    }

    pub fn is_file(&self) -> bool {
        matches!(self, InstanceSettings::File(_))
    }

    /// Sink state used to shorten exported files.
    pub fn sink(&self) -> Option<usize> {
        match self {
            InstanceSettings::Bench { .. } => Some(SINK),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            InstanceSettings::Bench { rho } => format!("appendix_e, rho = {rho}"),
            InstanceSettings::Random { dims, contexts, .. } => format!(
                "random S={} A={} H={} L={contexts}",
                dims.states, dims.actions, dims.horizon
            ),
            InstanceSettings::File(p) => p
                .file_name()
                .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned()),
        }
    }

    pub fn load(&self) -> Result<Instance, CliError> {
        match self {
            InstanceSettings::Bench { rho } => {
                let (model, dist) = appendix_e_instance(*rho).map_err(CliError::runtime)?;
                Ok(Instance {
                    model,
                    dist,
                    set_distributions: None,
                })
            }
            InstanceSettings::Random {
                dims,
                contexts,
                sparsity,
                seed,
            } => {
                let mut rng = stream(*seed, Purpose::Instance);
                let (model, dist) = random_instance(*dims, *contexts, *sparsity, &mut rng)
                    .map_err(|e| CliError::config(e.to_string()))?;
                Ok(Instance {
                    model,
                    dist,
                    set_distributions: None,
                })
            }
            InstanceSettings::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::config(format!("instance {}: {e}", path.display())))?;
                InstanceFile::parse(&text)
                    .and_then(|f| f.build())
                    .map_err(CliError::runtime)
            }
        }
    }

    fn record(&self) -> Result<InstanceRecord, CliError> {
        Ok(match self {
            InstanceSettings::Bench { rho } => InstanceRecord {
                source: "appendix_e".into(),
                rho: Some(*rho),
                ..InstanceRecord::default()
            },
            InstanceSettings::Random {
                dims,
                contexts,
                sparsity,
                seed,
            } => InstanceRecord {
                source: "random".into(),
                states: Some(dims.states),
                actions: Some(dims.actions),
                horizon: Some(dims.horizon),
                contexts: Some(*contexts),
                sparsity: Some(*sparsity),
                instance_seed: Some(*seed),
                ..InstanceRecord::default()
            },
            InstanceSettings::File(path) => {
                let bytes =
                    std::fs::read(path).map_err(|e| CliError::config(format!("instance {}: {e}", path.display())))?;
                InstanceRecord {
                    source: "file".into(),
                    file_sha256: Some(sha256_hex(&bytes)),
                    ..InstanceRecord::default()
                }
            }
        })
    }
}

/// Instance part of the metadata sidecar. Paths are left out so the same
/// configuration gives the same sidecar wherever it runs.
#[derive(Debug, Default, Serialize)]
struct InstanceRecord {
    source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    states: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    actions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    contexts: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sparsity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    instance_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    file_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSetting {
    Iid,
    Adversarial(Vec<usize>),
    RoundRobin(Option<Vec<usize>>),
}

#[derive(Debug)]
pub struct RunSettings {
    pub instance: InstanceSettings,
    pub learners: Vec<LearnerKind>,
    pub episodes: u64,
    pub seeds: Vec<u64>,
    pub delta: f64,
    pub delta_prime: Option<f64>,
    pub bonus_scale: f64,
    pub schedule: ScheduleSetting,
    pub pac_every: Option<u64>,
    pub diagnostics: bool,
    pub plot: bool,
    pub sequential: bool,
    pub out: PathBuf,
}

fn read_sequence(path: &Path) -> Result<Vec<usize>, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::config(format!("sequence {}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(i, l)| {
            l.parse().map_err(|_| {
                CliError::config(format!(
                    "sequence {} entry {}: {l:?} is not an index",
                    path.display(),
                    i + 1
                ))
            })
        })
        .collect()
}

impl RunSettings {
    pub fn resolve(args: RunArgs) -> Result<Self, CliError> {
        let (file, base) = load_file(args.config.as_deref())?;
        let instance = InstanceSettings::merge(&args.inst, &file, &base)?;
        let names = args
            .learners
            .or(file.learners.clone())
            .unwrap_or_else(|| vec!["mvp".into(), "ucbvi".into(), "s_ucbvi".into()]);
        let mut learners = Vec::new();
        for n in &names {
            let kind = LearnerKind::parse(n.trim()).ok_or_else(|| {
                CliError::config(format!(
                    "unknown learner {n:?} (expected mvp, prestage_mvp, ucbvi, s_ucbvi, random, oracle)"
                ))
            })?;
            if !learners.contains(&kind) {
                learners.push(kind);
            }
        }
        if learners.is_empty() {
            return Err(CliError::config("no learners selected"));
        }
        let episodes = args.episodes.or(file.episodes).unwrap_or(BENCH_EPISODES);
        if episodes == 0 {
            return Err(CliError::config("episodes must be at least 1"));
        }
        let seeds = match args.seed_list.or(file.seed_list.clone()) {
            Some(list) => list,
            None => {
                let n = args.seeds.or(file.seeds).unwrap_or(5);
                (1..=n).collect()
            }
        };
        if seeds.is_empty() {
            return Err(CliError::config("seed list is empty"));
        }
        let delta = args.delta.or(file.delta).unwrap_or(0.1);
        if !(delta > 0.0 && delta < 1.0) {
            return Err(CliError::config(format!("delta = {delta} outside (0, 1)")));
        }
        let delta_prime = args.delta_prime.or(file.delta_prime);
        if let Some(dp) = delta_prime {
            if !(dp > 0.0 && dp < 1.0) {
                return Err(CliError::config(format!("delta_prime = {dp} outside (0, 1)")));
            }
        }
        let bonus_scale = args.bonus_scale.or(file.bonus_scale).unwrap_or(1.0);
        if !(bonus_scale >= 0.0 && bonus_scale.is_finite()) {
            return Err(CliError::config(format!(
                "bonus_scale = {bonus_scale} must be finite and >= 0"
            )));
        }
        let schedule = match args.schedule.or(file.schedule.clone()).as_deref().unwrap_or("iid") {
            "iid" => ScheduleSetting::Iid,
            "adversarial" => {
                let path = match (args.sequence, file.sequence.clone()) {
                    (Some(p), _) => p,
                    (None, Some(p)) => rebase(&base, p),
                    (None, None) => return Err(CliError::config("the adversarial schedule needs --sequence FILE")),
                };
                ScheduleSetting::Adversarial(read_sequence(&path)?)
            }
            "round-robin" | "round_robin" => ScheduleSetting::RoundRobin(args.order.or(file.order.clone())),
            other => {
                return Err(CliError::config(format!(
                    "unknown schedule {other:?} (expected iid, adversarial, round-robin)"
                )))
            }
        };
        let pac_every = args.pac_every.or(file.pac_every);
        if pac_every == Some(0) {
            return Err(CliError::config("pac_every must be at least 1"));
        }
        let out = match (args.out, file.out.clone()) {
            (Some(p), _) => p,
            (None, Some(p)) => rebase(&base, p),
            (None, None) => PathBuf::from(DEFAULT_OUT),
        };
        Ok(Self {
            instance,
            learners,
            episodes,
            seeds,
            delta,
            delta_prime,
            bonus_scale,
            schedule,
            pac_every,
            diagnostics: args.diagnostics || file.diagnostics.unwrap_or(false),
            plot: args.plot || file.plot.unwrap_or(false),
            sequential: args.sequential || file.sequential.unwrap_or(false),
            out,
        })
    }

    pub fn schedule(&self, dist: &ContextDistribution) -> Result<ContextSchedule, CliError> {
        let dist = dist.clone();
        Ok(match &self.schedule {
            ScheduleSetting::Iid => ContextSchedule::iid(dist),
            ScheduleSetting::Adversarial(seq) => ContextSchedule::adversarial(dist, seq.clone()),
            ScheduleSetting::RoundRobin(order) => {
                let order = order.clone().unwrap_or_else(|| (0..dist.len()).collect());
                ContextSchedule::round_robin(dist, order)
            }
        })
    }

    /// Resolved configuration as TOML. Leaves out the output directory and
    /// execution mode, neither of which changes the results.
    pub fn sidecar(&self) -> Result<String, CliError> {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            tool: &'static str,
            version: &'static str,
            command: &'static str,
            learners: Vec<&'static str>,
            episodes: u64,
            seeds: &'a [u64],
            delta: f64,
            #[serde(skip_serializing_if = "Option::is_none")]
            delta_prime: Option<f64>,
            bonus_scale: f64,
            schedule: &'static str,
            #[serde(skip_serializing_if = "Option::is_none")]
            schedule_sequence_sha256: Option<String>,
            #[serde(skip_serializing_if = "Option::is_none")]
            round_robin_order: Option<&'a [usize]>,
            #[serde(skip_serializing_if = "Option::is_none")]
            pac_every: Option<u64>,
            instance: InstanceRecord,
        }
        let (schedule, seq_hash, order) = match &self.schedule {
            ScheduleSetting::Iid => ("iid", None, None),
            ScheduleSetting::Adversarial(seq) => {
                let text: String = seq.iter().map(|i| format!("{i}\n")).collect();
                ("adversarial", Some(sha256_hex(text.as_bytes())), None)
            }
            ScheduleSetting::RoundRobin(order) => ("round-robin", None, order.as_deref()),
        };
        let s = Sidecar {
            tool: "maskrl",
            version: env!("CARGO_PKG_VERSION"),
            command: "run",
            learners: self.learners.iter().map(|k| k.label()).collect(),
            episodes: self.episodes,
            seeds: &self.seeds,
            delta: self.delta,
            delta_prime: self.delta_prime,
            bonus_scale: self.bonus_scale,
            schedule,
            schedule_sequence_sha256: seq_hash,
            round_robin_order: order,
            pac_every: self.pac_every,
            instance: self.instance.record()?,
        };
        toml::to_string(&s).map_err(|e| CliError::runtime(maskrl::Error::Format(e.to_string())))
    }
}

#[derive(Debug)]
pub struct GapSettings {
    pub instance: InstanceSettings,
    pub p_grid: Vec<f64>,
    pub episodes: u64,
    pub out: PathBuf,
}

impl GapSettings {
    pub fn resolve(args: GapArgs) -> Result<Self, CliError> {
        let (file, base) = load_file(args.config.as_deref())?;
        let instance = InstanceSettings::merge(&args.inst, &file, &base)?;
        let p_grid = args
            .p_grid
            .or(file.p_grid.clone())
            .unwrap_or_else(|| DEFAULT_P_GRID.to_vec());
        if p_grid.is_empty() {
            return Err(CliError::config("p grid is empty"));
        }
        if let Some(p) = p_grid.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(CliError::config(format!("trimming level p = {p} outside [0, 1)")));
        }
        let episodes = args.episodes.or(file.episodes).unwrap_or(BENCH_EPISODES);
        if episodes == 0 {
            return Err(CliError::config("episodes must be at least 1"));
        }
        let out = match (args.out, file.out.clone()) {
            (Some(p), _) => p,
            (None, Some(p)) => rebase(&base, p),
            (None, None) => PathBuf::from(DEFAULT_OUT),
        };
        Ok(Self {
            instance,
            p_grid,
            episodes,
            out,
        })
    }

    pub fn sidecar(&self) -> Result<String, CliError> {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            tool: &'static str,
            version: &'static str,
            command: &'static str,
            p_grid: &'a [f64],
            episodes: u64,
            instance: InstanceRecord,
        }
        let s = Sidecar {
            tool: "maskrl",
            version: env!("CARGO_PKG_VERSION"),
            command: "analyze-gaps",
            p_grid: &self.p_grid,
            episodes: self.episodes,
            instance: self.instance.record()?,
        };
        toml::to_string(&s).map_err(|e| CliError::runtime(maskrl::Error::Format(e.to_string())))
    }
}
