//! Run configuration files.
//!
//! A run file names the environment, variant, seeds and output directory,
//! points at optional reward, morphology-range and target files, and may
//! override any field of the built-in defaults in its `[ppo]`, `[env]`,
//! `[network]`, `[curriculum]`, `[commands]`, `[eval]` and `[probe]`
//! tables. Unknown keys are errors.

use std::fs;
use std::path::{Path, PathBuf};

use morphcritic_core::env::{EnvKind, TargetSet};
use morphcritic_core::eval::{EvalConfig, ProbeConfig};
use morphcritic_core::morphology::{Interval, MorphRanges, COMPONENT_NAMES, MORPH_DIM};
use morphcritic_core::nets::Variant;
use morphcritic_core::ppo::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: i64 = 1;

/// Relative output directories resolve against this root when it is set.
pub const OUTPUT_ROOT_ENV: &str = "MORPHCRITIC_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    PointMass,
    Quad,
}

impl Environment {
    pub fn base(self) -> TrainConfig {
        match self {
            Environment::PointMass => TrainConfig::point_mass(),
            Environment::Quad => TrainConfig::quad(),
        }
    }

    fn kind(self) -> EnvKind {
        match self {
            Environment::PointMass => EnvKind::PointMass,
            Environment::Quad => EnvKind::Quad,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    schema_version: i64,
    environment: Environment,
    #[serde(default = "default_variant")]
    variant: Variant,
    seeds: Vec<u64>,
    output_dir: PathBuf,
    reward: Option<PathBuf>,
    morphology: Option<PathBuf>,
    targets: Option<PathBuf>,
    randomize_morphology: Option<bool>,
    checkpoint_every: Option<u64>,
    #[serde(default)]
    ppo: Table,
    #[serde(default)]
    env: Table,
    #[serde(default)]
    network: Table,
    #[serde(default)]
    curriculum: Table,
    #[serde(default)]
    commands: Table,
    #[serde(default)]
    eval: Table,
    #[serde(default)]
    probe: Table,
}

fn default_variant() -> Variant {
    Variant::FilmCritic
}

/// A fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// File this configuration was read from.
    pub source: PathBuf,
    pub environment: Environment,
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub train: TrainConfig,
    pub targets: TargetSet,
    pub eval: EvalConfig,
    pub probe: ProbeConfig,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn parse_table(path: &Path) -> Result<Table> {
    read(path)?.parse::<Table>().map_err(|e| CliError::config(path, e))
}

fn check_version(table: &mut Table, path: &Path) -> Result<()> {
    match table.remove("schema_version") {
        Some(Value::Integer(SCHEMA_VERSION)) => Ok(()),
        Some(v) => Err(CliError::config(path, format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"))),
        None => Err(CliError::config(path, "missing schema_version")),
    }
}

fn merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Apply the keys of `over` on top of `base`, rejecting unknown keys.
fn overlay<T: Serialize + DeserializeOwned>(base: &T, over: &Table, what: &str, path: &Path) -> Result<T> {
    let mut table = Table::try_from(base).map_err(|e| CliError::config(path, format!("{what}: {e}")))?;
    merge(&mut table, over);
    Value::Table(table)
        .try_into()
        .map_err(|e| CliError::config(path, format!("[{what}]: {e}")))
}

fn resolve_relative(base_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// Output directories given relative to the config resolve against
/// `$MORPHCRITIC_OUTPUT_ROOT` when set, else the working directory.
pub fn resolve_output(p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

/// Reward weights file: `schema_version` plus any reward fields.
pub fn load_reward(path: &Path, base: &morphcritic_core::reward::RewardWeights) -> Result<morphcritic_core::reward::RewardWeights> {
    let mut t = parse_table(path)?;
    check_version(&mut t, path)?;
    let w = overlay(base, &t, "reward", path)?;
    w.validate().map_err(|e| CliError::config(path, e))?;
    Ok(w)
}

/// Morphology ranges file: `schema_version` and one `[lo, hi]` pair per
/// component, all required.
pub fn load_ranges(path: &Path) -> Result<MorphRanges> {
    let mut t = parse_table(path)?;
    check_version(&mut t, path)?;
    let mut intervals = [Interval::new(0.0, 0.0); MORPH_DIM];
    for (i, name) in COMPONENT_NAMES.iter().enumerate() {
        let pair = t
            .remove(*name)
            .ok_or_else(|| CliError::config(path, format!("missing range `{name}`")))?;
        let pair: [f64; 2] = pair
            .try_into()
            .map_err(|e| CliError::config(path, format!("range `{name}` must be [lo, hi]: {e}")))?;
        intervals[i] = Interval::new(pair[0], pair[1]);
    }
    if let Some(k) = t.keys().next() {
        return Err(CliError::config(path, format!("unknown key `{k}`")));
    }
    let r = MorphRanges { intervals };
    r.validate().map_err(|e| CliError::config(path, e))?;
    Ok(r)
}

pub fn load_targets(path: &Path, ranges: &MorphRanges) -> Result<TargetSet> {
    let mut t = parse_table(path)?;
    check_version(&mut t, path)?;
    let set: TargetSet = Value::Table(t).try_into().map_err(|e| CliError::config(path, e))?;
    set.validate(ranges).map_err(|e| CliError::config(path, e))?;
    Ok(set)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut table = parse_table(path)?;
        check_version(&mut table, path)?;
        table.insert("schema_version".into(), Value::Integer(SCHEMA_VERSION));
        let file: RunFile = Value::Table(table).try_into().map_err(|e| CliError::config(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));

        let mut train = file.environment.base();
        if let Some(p) = &file.reward {
            train.reward = load_reward(&resolve_relative(dir, p), &train.reward)?;
        }
        if let Some(p) = &file.morphology {
            train.ranges = load_ranges(&resolve_relative(dir, p))?;
        }
        let targets = match &file.targets {
            Some(p) => load_targets(&resolve_relative(dir, p), &train.ranges)?,
            None => TargetSet::default(),
        };
        train.ppo = overlay(&train.ppo, &file.ppo, "ppo", path)?;
        train.env = overlay(&train.env, &file.env, "env", path)?;
        train.network = overlay(&train.network, &file.network, "network", path)?;
        train.curriculum = overlay(&train.curriculum, &file.curriculum, "curriculum", path)?;
        train.commands = overlay(&train.commands, &file.commands, "commands", path)?;
        if let Some(r) = file.randomize_morphology {
            train.randomize_morphology = r;
        }
        if let Some(c) = file.checkpoint_every {
            train.checkpoint_every = c;
        }
        if train.env.kind != file.environment.kind() {
            return Err(CliError::config(path, "env.kind contradicts `environment`"));
        }
        train.validate().map_err(|e| CliError::config(path, e))?;
        let eval: EvalConfig = overlay(&EvalConfig::default(), &file.eval, "eval", path)?;
        eval.validate().map_err(|e| CliError::config(path, e))?;
        let probe: ProbeConfig = overlay(&ProbeConfig::default(), &file.probe, "probe", path)?;

        let cfg = RunConfig {
            source: path.to_path_buf(),
            environment: file.environment,
            variant: file.variant,
            seeds: file.seeds,
            output_dir: resolve_output(&file.output_dir),
            train,
            targets,
            eval,
            probe,
        };
        cfg.check_seeds().map_err(|e| CliError::config(path, e))?;
        Ok(cfg)
    }

    fn check_seeds(&self) -> std::result::Result<(), String> {
        if self.seeds.is_empty() {
            return Err("seed list is empty".into());
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            return Err("seed list has duplicates".into());
        }
        Ok(())
    }

    /// Target list from a separate file, validated against these ranges.
    pub fn with_targets_file(mut self, path: &Path) -> Result<Self> {
        self.targets = load_targets(path, &self.train.ranges)?;
        Ok(self)
    }

    /// Hash of everything that shapes training and evaluation except the
    /// variant and seeds, so runs that should be comparable share it.
    pub fn config_hash(&self) -> String {
        let body = serde_json::json!({
            "train": self.train,
            "targets": self.targets,
            "eval": self.eval,
        });
        hash_json(&body)
    }

    pub fn reward_hash(&self) -> String {
        hash_json(&serde_json::to_value(&self.train.reward).expect("reward weights serialize"))
    }

    pub fn curriculum_hash(&self) -> String {
        hash_json(&serde_json::json!({
            "curriculum": self.train.curriculum,
            "commands": self.train.commands,
        }))
    }

    /// Write a self-contained copy of this configuration under `dir`: a
    /// run file with every field spelled out plus its reward, range and
    /// target files. Loading `dir/run.toml` gives back an equal config.
    pub fn write_snapshot(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let to_table = |v: &dyn ToTable| v.to_table().map_err(|e| CliError::config(dir, e));

        let mut reward = to_table(&self.train.reward)?;
        reward.insert("schema_version".into(), Value::Integer(SCHEMA_VERSION));
        let mut ranges = Table::new();
        ranges.insert("schema_version".into(), Value::Integer(SCHEMA_VERSION));
        for (iv, name) in self.train.ranges.intervals.iter().zip(COMPONENT_NAMES) {
            ranges.insert(name.into(), Value::Array(vec![Value::Float(iv.lo), Value::Float(iv.hi)]));
        }
        let mut targets = to_table(&self.targets)?;
        targets.insert("schema_version".into(), Value::Integer(SCHEMA_VERSION));

        let file = RunFile {
            schema_version: SCHEMA_VERSION,
            environment: self.environment,
            variant: self.variant,
            seeds: self.seeds.clone(),
            output_dir: self.output_dir.clone(),
            reward: Some("reward.toml".into()),
            morphology: Some("morphology.toml".into()),
            targets: Some("targets.toml".into()),
            randomize_morphology: Some(self.train.randomize_morphology),
            checkpoint_every: Some(self.train.checkpoint_every),
            ppo: to_table(&self.train.ppo)?,
            env: to_table(&self.train.env)?,
            network: to_table(&self.train.network)?,
            curriculum: to_table(&self.train.curriculum)?,
            commands: to_table(&self.train.commands)?,
            eval: to_table(&self.eval)?,
            probe: to_table(&self.probe)?,
        };
        let run = to_table(&file)?;
        for (name, t) in [("reward.toml", reward), ("morphology.toml", ranges), ("targets.toml", targets), ("run.toml", run)] {
            let p = dir.join(name);
            let text = toml::to_string(&t).map_err(|e| CliError::config(&p, e))?;
            fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        }
        Ok(dir.join("run.toml"))
    }
}

trait ToTable {
    fn to_table(&self) -> std::result::Result<Table, toml::ser::Error>;
}

impl<T: Serialize> ToTable for T {
    fn to_table(&self) -> std::result::Result<Table, toml::ser::Error> {
        Table::try_from(self)
    }
}

pub fn hash_json(v: &serde_json::Value) -> String {
    let digest = Sha256::digest(v.to_string().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
