mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{AblateWhich, EvalMode};
use config::ExperimentConfig;

#[derive(Debug)]
pub enum Failure {
    /// Bad input: config, data or arguments. Exit code 1.
    Validation(String),
    /// Something broke while running (I/O, non-finite loss). Exit code 2.
    Runtime(String),
}

impl Failure {
    pub fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl From<tabbin::Error> for Failure {
    fn from(e: tabbin::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tabbin", version, about = "Binning-target pretraining for tabular data")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Falls back to TABBIN_THREADS.
    #[arg(long, global = true, env = "TABBIN_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit bins on the train split and write bins.txt.
    Bin,
    /// Pretrain an encoder and write model.tbck and train_log.txt.
    Pretrain,
    /// Evaluate a pretrained encoder.
    Eval {
        #[arg(long, value_enum, default_value = "probe")]
        mode: EvalMode,
    },
    /// Pretrain and probe every cell of the config's grid.
    Grid {
        /// Skip cells that already have a report.
        #[arg(long)]
        resume: bool,
    },
    /// Compare an ablated bin target against the unablated baseline.
    Ablate {
        #[arg(long, value_enum)]
        which: AblateWhich,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        tabbin::exec::init_threads(n)?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Validation("--config <path> is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    commands::echo_config(&cfg, &cfg.out)?;
    match cli.command {
        Command::Bin => commands::cmd_bin(&cfg),
        Command::Pretrain => commands::cmd_pretrain(&cfg),
        Command::Eval { mode } => commands::cmd_eval(&cfg, mode),
        Command::Grid { resume } => commands::cmd_grid(&cfg, resume),
        Command::Ablate { which } => commands::cmd_ablate(&cfg, which),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
