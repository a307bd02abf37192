//! `jamcell` command-line front end.
//!
//! Log verbosity follows `JAMCELL_LOG` (`error`, `warn`, `info`, `debug`,
//! `trace`); warnings are shown by default.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jamcell::experiment::{load_config, run_experiment, ExperimentKind};

#[derive(Parser)]
#[command(name = "jamcell", version, about = "5G NR downlink jamming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single-link SSB attack: PSS/SSS detection, DM-RS SJNR, EVM.
    SsbAttack(RunArgs),
    /// Cell-level throughput/goodput sweep.
    CellSweep(RunArgs),
    /// STEPS mobility trace.
    MobilityTrace(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file (may be empty).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    parallel: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("JAMCELL_LOG", "warn")).init();
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::SsbAttack(a) => (ExperimentKind::SsbAttack, a),
        Command::CellSweep(a) => (ExperimentKind::CellSweep, a),
        Command::MobilityTrace(a) => (ExperimentKind::MobilityTrace, a),
    };
    match run(kind, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jamcell: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(kind: ExperimentKind, args: &RunArgs) -> jamcell::Result<()> {
    let loaded = load_config(&args.config)?;
    for w in &loaded.warnings {
        log::warn!("{w}");
    }
    let mut cfg = loaded.config;
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.clone();
    }
    let report = run_experiment(&cfg, kind, &args.out, args.parallel)?;
    for f in &report.files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}
