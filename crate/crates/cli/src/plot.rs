//! `plot-data`: plot-ready CSVs from evaluated runs.
//!
//! Reads every `<variant>/seed_<n>/transfer.json` below a run directory
//! and writes, into a separate directory:
//!
//! * `transfer_curve.csv`: variant, seed, target, d, v_bar, t_win, t_max
//! * `transfer_curve_mean.csv`: variant, target, d, v_bar_mean, v_bar_std, seeds
//! * `ev_bars.csv` and `advantage_noise_bars.csv`: variant, target, d, mean, std, seeds
//! * `value_traces/<variant>_seed_<n>_<target>.csv`: t, reward, value

use std::fs;
use std::path::{Path, PathBuf};

use morphcritic_core::eval::TransferReport;
use morphcritic_core::nets::Variant;

use crate::error::{CliError, Result};
use crate::eval::TRANSFER_JSON;
use crate::train::mean_std;

struct Loaded {
    variant: Variant,
    seed: u64,
    report: TransferReport,
}

fn load_reports(dir: &Path) -> Result<Vec<Loaded>> {
    let mut found = Vec::new();
    for v in Variant::ALL {
        let vdir = dir.join(v.tag());
        let Ok(entries) = fs::read_dir(&vdir) else { continue };
        for e in entries.filter_map(|e| e.ok()) {
            let name = e.file_name().to_string_lossy().to_string();
            let Some(seed) = name.strip_prefix("seed_").and_then(|s| s.parse::<u64>().ok()) else { continue };
            let p = e.path().join(TRANSFER_JSON);
            if !p.exists() {
                continue;
            }
            let bytes = fs::read(&p).map_err(|err| CliError::io(&p, err))?;
            let report: TransferReport = serde_json::from_slice(&bytes).map_err(|err| CliError::config(&p, err))?;
            found.push(Loaded { variant: v, seed, report });
        }
    }
    if found.is_empty() {
        return Err(CliError::MissingArtifact(format!(
            "no {}/<variant>/seed_<n>/{TRANSFER_JSON} found; run eval or ablate first",
            dir.display()
        )));
    }
    found.sort_by_key(|l| (Variant::ALL.iter().position(|v| *v == l.variant), l.seed));
    Ok(found)
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Per variant and target, mean and std of `pick` over the seeds that
/// have a value.
fn bars(runs: &[Loaded], path: &Path, pick: impl Fn(&morphcritic_core::eval::TargetReport) -> Option<f64>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["variant", "target", "d", "mean", "std", "seeds"])?;
    for rows in group_targets(runs) {
        let xs: Vec<f64> = rows.reports.iter().filter_map(|t| pick(t)).collect();
        let (m, s) = if xs.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&xs) };
        w.write_record([rows.variant.tag().to_string(), rows.target.clone(), f6(rows.distance), f6(m), f6(s), xs.len().to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

struct TargetGroup<'a> {
    variant: Variant,
    target: String,
    distance: f64,
    reports: Vec<&'a morphcritic_core::eval::TargetReport>,
}

fn group_targets(runs: &[Loaded]) -> Vec<TargetGroup<'_>> {
    let mut groups: Vec<TargetGroup> = Vec::new();
    for l in runs {
        for t in &l.report.targets {
            match groups.iter_mut().find(|g| g.variant == l.variant && g.target == t.name) {
                Some(g) => g.reports.push(t),
                None => groups.push(TargetGroup {
                    variant: l.variant,
                    target: t.name.clone(),
                    distance: t.distance,
                    reports: vec![t],
                }),
            }
        }
    }
    groups
}

pub fn cmd_plot_data(dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let runs = load_reports(dir)?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut written = Vec::new();

    let p = out.join("transfer_curve.csv");
    let mut w = writer(&p)?;
    w.write_record(["variant", "seed", "target", "d", "v_bar", "t_win", "t_max"])?;
    for l in &runs {
        for t in &l.report.targets {
            w.write_record([
                l.variant.tag().to_string(),
                l.seed.to_string(),
                t.name.clone(),
                f6(t.distance),
                f6(t.v_bar_mean),
                f6(t.t_win_mean),
                f6(t.t_max_mean),
            ])?;
        }
    }
    w.flush().map_err(|e| CliError::io(&p, e))?;
    written.push(p);

    let p = out.join("transfer_curve_mean.csv");
    let mut w = writer(&p)?;
    w.write_record(["variant", "target", "d", "v_bar_mean", "v_bar_std", "seeds"])?;
    for g in group_targets(&runs) {
        let xs: Vec<f64> = g.reports.iter().map(|t| t.v_bar_mean).collect();
        let (m, s) = mean_std(&xs);
        w.write_record([g.variant.tag().to_string(), g.target.clone(), f6(g.distance), f6(m), f6(s), xs.len().to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(&p, e))?;
    written.push(p);

    let p = out.join("ev_bars.csv");
    bars(&runs, &p, |t| t.explained_variance)?;
    written.push(p);
    let p = out.join("advantage_noise_bars.csv");
    bars(&runs, &p, |t| t.advantage_noise)?;
    written.push(p);

    let traces = out.join("value_traces");
    fs::create_dir_all(&traces).map_err(|e| CliError::io(&traces, e))?;
    for l in &runs {
        let mut names: Vec<&str> = l.report.traces.iter().map(|r| r.target.as_str()).collect();
        names.dedup();
        for name in names {
            let p = traces.join(format!("{}_seed_{}_{}.csv", l.variant.tag(), l.seed, file_safe(name)));
            let mut w = writer(&p)?;
            w.write_record(["t", "reward", "value"])?;
            for r in l.report.traces.iter().filter(|r| r.target == name) {
                w.write_record([f6(r.t), f6(r.reward), f6(r.value)])?;
            }
            w.flush().map_err(|e| CliError::io(&p, e))?;
            written.push(p);
        }
    }
    Ok(written)
}
