//! `train` and `ablate`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use morphcritic_core::eval::zero_shot_eval;
use morphcritic_core::nets::Variant;
use morphcritic_core::ppo::{train, TrainResult};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::eval::{write_report, TargetSummary};
use crate::manifest::{code_version, unix_now, RunManifest, RunRecord, CSV_SCHEMA_VERSION};

pub const ABLATION_FILE: &str = "ablation.csv";
pub const ABLATION_LONG_FILE: &str = "ablation_long.csv";
pub const ABLATION_SEEDS_FILE: &str = "ablation_seeds.csv";

/// Where one (variant, seed) run keeps its artifacts.
pub fn run_dir(root: &Path, variant: Variant, seed: u64) -> PathBuf {
    root.join(variant.tag()).join(format!("seed_{seed}"))
}

pub(crate) fn new_manifest(command: &str, cfg: &RunConfig, snapshot: &Path) -> RunManifest {
    RunManifest {
        schema_version: 1,
        csv_schema_version: CSV_SCHEMA_VERSION,
        command: command.into(),
        code_version: code_version(),
        config_file: cfg.source.display().to_string(),
        config_snapshot: snapshot.display().to_string(),
        config: serde_json::to_value(cfg).expect("config serializes"),
        config_hash: cfg.config_hash(),
        reward_hash: cfg.reward_hash(),
        curriculum_hash: cfg.curriculum_hash(),
        seeds: cfg.seeds.clone(),
        runs: Vec::new(),
        outputs: Vec::new(),
        started_unix_s: unix_now(),
        wall_time_s: 0.0,
        failed: false,
        error: None,
    }
}

/// Record the outcome, write the manifest, and pass the outcome on.
pub(crate) fn finish<T>(mut m: RunManifest, start: Instant, out: &Path, result: Result<T>) -> Result<(RunManifest, T)> {
    m.wall_time_s = start.elapsed().as_secs_f64();
    if let Err(e) = &result {
        m.failed = true;
        m.error = Some(e.to_string());
    }
    m.write(out)?;
    result.map(|v| (m, v))
}

fn checkpoints(out: &Path, dir: &Path) -> Vec<String> {
    let mut found = Vec::new();
    let rel = |p: &Path| p.strip_prefix(out).unwrap_or(p).to_string_lossy().replace('\\', "/");
    let fin = dir.join("final.ckpt");
    if fin.exists() {
        found.push(rel(&fin));
    }
    if let Ok(entries) = fs::read_dir(dir.join("checkpoints")) {
        let mut mid: Vec<String> = entries.filter_map(|e| e.ok()).map(|e| rel(&e.path())).collect();
        mid.sort();
        found.extend(mid);
    }
    found
}

fn train_one(cfg: &RunConfig, variant: Variant, seed: u64, out: &Path, m: &mut RunManifest) -> Result<TrainResult> {
    let dir = run_dir(out, variant, seed);
    let start = Instant::now();
    log::info!("training {variant} seed {seed} into {}", dir.display());
    let result = train(&cfg.train, variant, seed, Some(&dir));
    m.runs.push(RunRecord {
        variant: variant.to_string(),
        variant_tag: variant.tag().into(),
        seed,
        dir: dir.strip_prefix(out).unwrap_or(&dir).display().to_string(),
        checkpoints: checkpoints(out, &dir),
        env_steps: result.as_ref().map(|r| r.env_steps).unwrap_or(0),
        wall_time_s: start.elapsed().as_secs_f64(),
        failed: result.is_err(),
        error: result.as_ref().err().map(|e| e.to_string()),
    });
    Ok(result?)
}

fn prepare(cfg: &RunConfig) -> Result<PathBuf> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    cfg.write_snapshot(&out.join("config"))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<RunManifest> {
    let start = Instant::now();
    let snapshot = prepare(cfg)?;
    let mut m = new_manifest("train", cfg, &snapshot);
    let mut result = Ok(());
    for &seed in &cfg.seeds {
        if let Err(e) = train_one(cfg, cfg.variant, seed, &cfg.output_dir, &mut m) {
            result = Err(e);
            break;
        }
    }
    finish(m, start, &cfg.output_dir, result).map(|(m, _)| m)
}

/// One evaluated (variant, seed) run of an ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub variant: Variant,
    pub seed: u64,
    pub targets: Vec<TargetSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub variant: String,
    pub target: String,
    pub distance: f64,
    pub metric: &'static str,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
    pub config_hash: String,
}

pub const METRICS: [&str; 3] = ["v_bar", "t_win", "t_max"];

fn metric(t: &TargetSummary, name: &str) -> f64 {
    match name {
        "v_bar" => t.v_bar_mean,
        "t_win" => t.t_win_mean,
        _ => t.t_max_mean,
    }
}

/// Mean and sample standard deviation over seeds.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Per variant, target and metric: mean and std over seeds. Results are
/// put in seed order first, so the input order does not matter.
pub fn aggregate(results: &[SeedResult], config_hash: &str) -> Vec<AggregateRow> {
    let mut sorted: Vec<&SeedResult> = results.iter().collect();
    sorted.sort_by_key(|r| (Variant::ALL.iter().position(|v| *v == r.variant), r.seed));
    let mut rows = Vec::new();
    for v in Variant::ALL {
        let runs: Vec<&&SeedResult> = sorted.iter().filter(|r| r.variant == v).collect();
        let Some(first) = runs.first() else { continue };
        for (ti, t) in first.targets.iter().enumerate() {
            for name in METRICS {
                let xs: Vec<f64> = runs.iter().map(|r| metric(&r.targets[ti], name)).collect();
                let (mean, std) = mean_std(&xs);
                rows.push(AggregateRow {
                    variant: v.tag().into(),
                    target: t.target.clone(),
                    distance: t.distance,
                    metric: name,
                    mean,
                    std,
                    seeds: xs.len(),
                    config_hash: config_hash.into(),
                });
            }
        }
    }
    rows
}

/// Targets down the rows, one `mean ± std` column per variant.
pub fn write_wide_table(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    let mut header = vec!["target".to_string(), "distance".into(), "metric".into()];
    header.extend(Variant::ALL.iter().map(|v| v.tag().to_string()));
    w.write_record(&header)?;
    let mut keys: Vec<(&str, f64, &str)> = Vec::new();
    for r in rows {
        let k = (r.target.as_str(), r.distance, r.metric);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then(a.0.cmp(b.0))
            .then(METRICS.iter().position(|m| *m == a.2).cmp(&METRICS.iter().position(|m| *m == b.2)))
    });
    for (target, distance, metric) in keys {
        let mut rec = vec![target.to_string(), format!("{distance:.6}"), metric.to_string()];
        for v in Variant::ALL {
            let cell = rows
                .iter()
                .find(|r| r.variant == v.tag() && r.target == target && r.metric == metric)
                .map(|r| format!("{:.4} ± {:.4}", r.mean, r.std))
                .unwrap_or_default();
            rec.push(cell);
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct SeedRow<'a> {
    variant: &'a str,
    seed: u64,
    target: &'a str,
    distance: f64,
    v_bar: f64,
    t_win: f64,
    t_max: f64,
    explained_variance: Option<f64>,
    config_hash: &'a str,
}

fn write_seed_rows(path: &Path, results: &[SeedResult], config_hash: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    for r in results {
        for t in &r.targets {
            w.serialize(SeedRow {
                variant: r.variant.tag(),
                seed: r.seed,
                target: &t.target,
                distance: t.distance,
                v_bar: t.v_bar_mean,
                t_win: t.t_win_mean,
                t_max: t.t_max_mean,
                explained_variance: t.explained_variance,
                config_hash,
            })?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Train and evaluate every variant on the same seeds and configuration.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<RunManifest> {
    if cfg.seeds.len() < 3 {
        return Err(CliError::config(&cfg.source, format!("ablate needs at least 3 seeds, got {}", cfg.seeds.len())));
    }
    let start = Instant::now();
    let snapshot = prepare(cfg)?;
    let mut m = new_manifest("ablate", cfg, &snapshot);
    let out = cfg.output_dir.clone();
    let hash = cfg.config_hash();
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    let run = |m: &mut RunManifest| -> Result<()> {
        let mut results = Vec::new();
        for v in Variant::ALL {
            for &seed in &seeds {
                let res = train_one(cfg, v, seed, &out, m)?;
                let rep = zero_shot_eval(&res.bundle, &cfg.train, &cfg.targets, &cfg.eval)?;
                let targets = write_report(&run_dir(&out, v, seed), &rep)?;
                results.push(SeedResult { variant: v, seed, targets });
            }
        }
        let rows = aggregate(&results, &hash);
        write_wide_table(&out.join(ABLATION_FILE), &rows)?;
        let p = out.join(ABLATION_LONG_FILE);
        let mut w = csv::Writer::from_path(&p).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| CliError::io(&p, e))?;
        write_seed_rows(&out.join(ABLATION_SEEDS_FILE), &results, &hash)
    };
    let result = run(&mut m);
    finish(m, start, &out, result).map(|(m, _)| m)
}
