use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use log::error;

use ivelab::expcli::{cmd_didactic, cmd_fig3, cmd_fig5, cmd_plan_study, cmd_shift, RunConfig};
use ivelab::Error;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    /// Per-state uncertainty heatmaps with one cell held out of the data
    Fig3,
    /// Reachability of the held-out cell under seeking and averse policies
    Fig5,
    /// Averse policies under a shifted wind probability
    Shift,
    /// Implicit ensembles of the 1-D function-approximation problem
    Didactic,
    /// Ensemble-mean planning values against fixed-horizon estimates
    PlanStudy,
}

/// Implicit value ensemble experiments.
#[derive(Debug, Parser)]
#[command(name = "ivelab", version, about)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// Flat `key = value` configuration file
    #[arg(long)]
    config: PathBuf,

    /// Added to every configured seed
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,

    /// Output directory; overrides `out` in the config (default `out`)
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };

    let cfg = match RunConfig::from_file(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    let run = match cli.command {
        Command::Fig3 => cmd_fig3,
        Command::Fig5 => cmd_fig5,
        Command::Shift => cmd_shift,
        Command::Didactic => cmd_didactic,
        Command::PlanStudy => cmd_plan_study,
    };
    match run(&cfg, &out, cli.seed_offset) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e @ Error::Config(_)) => {
            error!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
