//! `probe`: the two-morphology value-interference check for every variant.

use std::fmt::Write as _;
use std::path::Path;

use morphcritic_core::eval::{interference_probe, OracleTask, ProbeConfig, ProbeReport};
use morphcritic_core::nets::Variant;

use crate::error::{CliError, Result};

pub const PROBE_CSV: &str = "probe.csv";

pub fn run_probe(cfg: &ProbeConfig) -> Result<Vec<ProbeReport>> {
    let task = OracleTask::default();
    Variant::ALL
        .iter()
        .map(|&v| interference_probe(v, &task, cfg).map_err(CliError::from))
        .collect()
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Fixed-width table, values to 6 decimals.
pub fn format_table(reports: &[ProbeReport]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<20} {:>12} {:>12} {:>12} {:>10} {:>8} {:>10} {:>6}",
        "variant", "V(m_A)", "V(m_B)", "A(m_A)", "separated", "pooled", "expected", "result"
    )
    .unwrap();
    for r in reports {
        let expected = if r.variant.critic_sees_morphology() { "separated" } else { "pooled" };
        writeln!(
            s,
            "{:<20} {:>12.6} {:>12.6} {:>12.6} {:>10} {:>8} {:>10} {:>6}",
            r.variant.to_string(),
            r.value_a,
            r.value_b,
            r.advantage_a,
            yes_no(r.per_morphology_fit),
            yes_no(r.pooled_fit),
            expected,
            if r.as_expected() { "PASS" } else { "FAIL" }
        )
        .unwrap();
    }
    s
}

pub fn write_csv(path: &Path, reports: &[ProbeReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    w.write_record(["variant", "value_a", "value_b", "advantage_a", "final_loss", "per_morphology_fit", "pooled_fit", "pass"])?;
    for r in reports {
        w.write_record([
            r.variant.tag().to_string(),
            format!("{:.6}", r.value_a),
            format!("{:.6}", r.value_b),
            format!("{:.6}", r.advantage_a),
            format!("{:.6e}", r.final_loss),
            r.per_morphology_fit.to_string(),
            r.pooled_fit.to_string(),
            r.as_expected().to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Print the table; a variant that misbehaves makes the result an error
/// after everything has been reported.
pub fn cmd_probe(cfg: &ProbeConfig, out: Option<&Path>) -> Result<Vec<ProbeReport>> {
    let reports = run_probe(cfg)?;
    print!("{}", format_table(&reports));
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        write_csv(&dir.join(PROBE_CSV), &reports)?;
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.as_expected()).map(|r| r.variant.to_string()).collect();
    if failed.is_empty() {
        Ok(reports)
    } else {
        Err(CliError::ProbeFailed(failed.join(", ")))
    }
}
