use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qtrader::cli::{self, RunMode};

#[derive(Parser)]
#[command(name = "qtrader", version, about = "Deterministic DQN trading backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a TOML config file.
    Run {
        /// Path to the run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's mode.
        #[arg(long, value_enum)]
        mode: Option<RunMode>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let Command::Run {
        config,
        seed,
        mode,
        out,
    } = args.command;
    let mut cfg = match cli::parse_config(&config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(mode) = mode {
        cfg.mode = mode;
    }
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("{e}");
        return ExitCode::from(1);
    }
    match cli::run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
