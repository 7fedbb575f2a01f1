use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use morphcritic_cli::config::RunConfig;
use morphcritic_cli::{eval, plot, probe, train, Result};
use morphcritic_core::eval::ProbeConfig;
use morphcritic_core::nets::Variant;

#[derive(Parser)]
#[command(name = "morphcritic", version, about = "Morphology-conditioned critics for cross-embodiment locomotion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one variant on every configured seed.
    Train(RunArgs),
    /// Zero-shot evaluation of trained checkpoints on the target morphologies.
    Eval(EvalArgs),
    /// Train and evaluate all four variants on the same seeds.
    Ablate(AblateArgs),
    /// Two-morphology value-interference probe for every variant.
    Probe(ProbeArgs),
    /// Plot-ready CSVs from an evaluated run directory.
    PlotData(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["vanilla", "actor", "concat", "film"])]
    variant: Option<String>,
    /// Output directory, used as given.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Target morphology file replacing the configured one.
    #[arg(long)]
    targets: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Training run to read checkpoints from [default: the configured output directory].
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    targets: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    /// Run file whose `[probe]` table is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for `probe.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Evaluated run directory (from `eval` or `ablate`).
    dir: PathBuf,
    /// Output directory [default: `<dir>_plots`].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(t) = &args.targets {
        cfg = cfg.with_targets_file(t)?;
    }
    if let Some(s) = args.seed {
        cfg.seeds = vec![s];
    }
    if let Some(v) = &args.variant {
        cfg.variant = v.parse::<Variant>()?;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn sibling(dir: &Path, suffix: &str) -> PathBuf {
    let name = dir.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_else(|| "run".into());
    dir.with_file_name(format!("{name}{suffix}"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = load(&args)?;
            let m = train::cmd_train(&cfg)?;
            println!("trained {} run(s) into {}", m.runs.len(), cfg.output_dir.display());
        }
        Command::Eval(args) => {
            let mut cfg = load(&args.run)?;
            let run_dir = args.run_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
            let out = args.run.out.clone().unwrap_or_else(|| sibling(&run_dir, "_eval"));
            cfg.output_dir = out.clone();
            let m = eval::cmd_eval(&cfg, &run_dir, &out)?;
            println!("evaluated {} checkpoint(s) into {}", m.runs.len(), out.display());
        }
        Command::Ablate(args) => {
            let mut cfg = RunConfig::load(&args.config)?;
            if let Some(t) = &args.targets {
                cfg = cfg.with_targets_file(t)?;
            }
            if let Some(o) = &args.out {
                cfg.output_dir = o.clone();
            }
            train::cmd_ablate(&cfg)?;
            println!("ablation written to {}", cfg.output_dir.join(train::ABLATION_FILE).display());
        }
        Command::Probe(args) => {
            let mut pc = match &args.config {
                Some(p) => RunConfig::load(p)?.probe,
                None => ProbeConfig::default(),
            };
            if let Some(s) = args.seed {
                pc.seed = s;
            }
            probe::cmd_probe(&pc, args.out.as_deref())?;
        }
        Command::PlotData(args) => {
            let out = args.out.clone().unwrap_or_else(|| sibling(&args.dir, "_plots"));
            let files = plot::cmd_plot_data(&args.dir, &out)?;
            println!("wrote {} file(s) into {}", files.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
