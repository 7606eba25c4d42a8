use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use spinlearn::{emit_report, run_experiment, write_report, ExperimentConfig, ExperimentKind, Format};

#[derive(Parser)]
#[command(name = "spinlearn", version, about = "Local samplers and low-degree learning for Ising models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit a sampler plan against the exact law.
    Sample(RunArgs),
    /// Roundtrip, uniformity and factorization audits of the inverter.
    InvertAudit(RunArgs),
    /// Fit low-degree polynomials over a degree sweep.
    Learn(RunArgs),
    /// Influence bounds and the transfer inequality.
    Influence(RunArgs),
    /// Anti-concentration, mixture and concentration audits.
    Anticonc(RunArgs),
    /// Run every sub-experiment listed under `runs`.
    Sweep(RunArgs),
    /// Generate a model file.
    Generate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed of the config and its runs.
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; `.json` selects JSON, anything else CSV. Defaults to
    /// CSV on stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> anyhow::Result<bool> {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Sample(a) => (ExperimentKind::Sample, a),
        Command::InvertAudit(a) => (ExperimentKind::InvertAudit, a),
        Command::Learn(a) => (ExperimentKind::Learn, a),
        Command::Influence(a) => (ExperimentKind::Influence, a),
        Command::Anticonc(a) => (ExperimentKind::Anticonc, a),
        Command::Sweep(a) => (ExperimentKind::Sweep, a),
        Command::Generate(a) => (ExperimentKind::Generate, a),
    };
    let mut cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    if kind == ExperimentKind::Generate {
        if let Some(out) = &args.out {
            // The generated model goes to --out; the cwd anchors it.
            cfg.out = Some(std::env::current_dir()?.join(out));
        }
    }
    let out = run_experiment(&cfg, Some(kind)).with_context(|| format!("running `{}`", cfg.name))?;
    for c in &out.checks {
        eprintln!("[{}] {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    match (&args.out, kind) {
        (Some(path), k) if k != ExperimentKind::Generate => {
            write_report(&out.records, path).with_context(|| format!("writing {}", path.display()))?
        }
        _ => emit_report(&out.records, Format::Csv, std::io::stdout().lock())?,
    }
    Ok(out.passed())
}
