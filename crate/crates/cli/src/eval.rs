//! `eval`: zero-shot transfer of trained checkpoints.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use morphcritic_autodiff::Checkpoint;
use morphcritic_core::eval::{load_policy, zero_shot_eval, TargetReport, TransferReport};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{RunManifest, RunRecord};
use crate::train::{finish, new_manifest, run_dir};

pub const TRANSFER_JSON: &str = "transfer.json";
pub const TRANSFER_CSV: &str = "transfer.csv";
pub const EPISODES_CSV: &str = "episodes.csv";
pub const SUMMARY_CSV: &str = "transfer_summary.csv";

/// One row of `transfer.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub target: String,
    pub distance: f64,
    pub v_bar_mean: f64,
    pub v_bar_std: f64,
    pub t_win_mean: f64,
    pub t_max_mean: f64,
    pub t_max_std: f64,
    pub explained_variance: Option<f64>,
    pub advantage_noise: Option<f64>,
    pub falls: usize,
    pub episodes: usize,
}

impl From<&TargetReport> for TargetSummary {
    fn from(t: &TargetReport) -> Self {
        Self {
            target: t.name.clone(),
            distance: t.distance,
            v_bar_mean: t.v_bar_mean,
            v_bar_std: t.v_bar_std,
            t_win_mean: t.t_win_mean,
            t_max_mean: t.t_max_mean,
            t_max_std: t.t_max_std,
            explained_variance: t.explained_variance,
            advantage_noise: t.advantage_noise,
            falls: t.falls,
            episodes: t.episodes.len(),
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

/// Write `transfer.json`, `transfer.csv` and `episodes.csv` into `dir`.
pub fn write_report(dir: &Path, rep: &TransferReport) -> Result<Vec<TargetSummary>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let json = serde_json::to_vec_pretty(rep).map_err(|e| CliError::Invalid(e.to_string()))?;
    let p = dir.join(TRANSFER_JSON);
    fs::write(&p, json).map_err(|e| CliError::io(&p, e))?;

    let summaries: Vec<TargetSummary> = rep.targets.iter().map(TargetSummary::from).collect();
    let p = dir.join(TRANSFER_CSV);
    let mut w = csv_writer(&p)?;
    for s in &summaries {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| CliError::io(&p, e))?;

    let p = dir.join(EPISODES_CSV);
    let mut w = csv_writer(&p)?;
    for t in &rep.targets {
        for e in &t.episodes {
            w.serialize(e)?;
        }
    }
    w.flush().map_err(|e| CliError::io(&p, e))?;
    Ok(summaries)
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    variant: &'a str,
    seed: u64,
    target: &'a str,
    distance: f64,
    v_bar_mean: f64,
    v_bar_std: f64,
    t_win_mean: f64,
    t_max_mean: f64,
    t_max_std: f64,
    explained_variance: Option<f64>,
    advantage_noise: Option<f64>,
    falls: usize,
    episodes: usize,
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// Evaluate the final checkpoint of every configured seed found under
/// `run` and write the reports under `out`, which must not be `run`.
pub fn cmd_eval(cfg: &RunConfig, run: &Path, out: &Path) -> Result<RunManifest> {
    if same_dir(run, out) {
        return Err(CliError::Invalid(format!("eval output {} would overwrite the training run", out.display())));
    }
    let v = cfg.variant;
    let ckpts: Vec<(u64, PathBuf)> = cfg.seeds.iter().map(|&s| (s, run_dir(run, v, s).join("final.ckpt"))).collect();
    if let Some((_, p)) = ckpts.iter().find(|(_, p)| !p.exists()) {
        return Err(CliError::MissingArtifact(p.display().to_string()));
    }
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let start = Instant::now();
    let snapshot = cfg.write_snapshot(&out.join("config"))?;
    let mut m = new_manifest("eval", cfg, &snapshot);
    let result = (|| -> Result<()> {
        let p = out.join(SUMMARY_CSV);
        let mut w = csv_writer(&p)?;
        for (seed, path) in &ckpts {
            let t0 = Instant::now();
            let ckpt = Checkpoint::load(path).map_err(|e| CliError::config(path, e))?;
            let bundle = load_policy(&ckpt, Some(v), &cfg.train).map_err(|e| CliError::config(path, e))?;
            let rep = zero_shot_eval(&bundle, &cfg.train, &cfg.targets, &cfg.eval)?;
            let dir = run_dir(out, v, *seed);
            for t in write_report(&dir, &rep)? {
                w.serialize(SummaryRow {
                    variant: v.tag(),
                    seed: *seed,
                    target: &t.target,
                    distance: t.distance,
                    v_bar_mean: t.v_bar_mean,
                    v_bar_std: t.v_bar_std,
                    t_win_mean: t.t_win_mean,
                    t_max_mean: t.t_max_mean,
                    t_max_std: t.t_max_std,
                    explained_variance: t.explained_variance,
                    advantage_noise: t.advantage_noise,
                    falls: t.falls,
                    episodes: t.episodes,
                })?;
            }
            m.runs.push(RunRecord {
                variant: v.to_string(),
                variant_tag: v.tag().into(),
                seed: *seed,
                dir: dir.strip_prefix(out).unwrap_or(&dir).display().to_string(),
                checkpoints: vec![path.display().to_string()],
                env_steps: 0,
                wall_time_s: t0.elapsed().as_secs_f64(),
                failed: false,
                error: None,
            });
        }
        w.flush().map_err(|e| CliError::io(&p, e))
    })();
    finish(m, start, out, result).map(|(m, _)| m)
}
