use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lawlab_cli::{apply_seed_env, cmd_bridges, cmd_coverage, cmd_distill, cmd_scaling, CliError, Options, RunConfig};
use lawlab_core::DeltaMode;

#[derive(Parser)]
#[command(name = "lawlab", version, about = "Dataset distillation scaling and coverage experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Accuracy,
    Risk,
}

#[derive(clap::Args)]
struct Common {
    /// Run-config JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: logical processors).
    #[arg(long)]
    workers: Option<usize>,
    /// Gap mode (overrides `mode`).
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(Subcommand)]
enum Command {
    /// Distil one synthetic set per ipc.
    Distill(Common),
    /// Single-configuration scaling law.
    Scaling(Common),
    /// Configuration-coverage law and greedy cover.
    Coverage {
        #[command(flatten)]
        common: Common,
        /// Target gap for the K_min estimate.
        #[arg(long)]
        eps0: Option<f64>,
    },
    /// Bridge bounds on one distilled instance.
    Bridges(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, eps0) = match &cli.command {
        Command::Distill(c) | Command::Scaling(c) | Command::Bridges(c) => (c, None),
        Command::Coverage { common, eps0 } => (common, *eps0),
    };
    let mut cfg = RunConfig::from_path(&common.config)?;
    apply_seed_env(&mut cfg)?;
    let opts = Options {
        out: common.out.clone(),
        mode: common.mode.map(|m| match m {
            Mode::Accuracy => DeltaMode::Accuracy,
            Mode::Risk => DeltaMode::Risk,
        }),
        eps0,
    };
    if common.workers == Some(0) {
        return Err(CliError::Validation("--workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Distill(_) => cmd_distill(&cfg, &opts),
        Command::Scaling(_) => cmd_scaling(&cfg, &opts),
        Command::Coverage { .. } => cmd_coverage(&cfg, &opts),
        Command::Bridges(_) => cmd_bridges(&cfg, &opts),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lawlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
