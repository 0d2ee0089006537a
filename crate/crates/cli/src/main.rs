use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dexflow_cli::commands::{self, CliError, Ctx};
use dexflow_cli::config::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "dexflow",
    version,
    about = "Turn raw dexterous-capture logs into training data and evaluate the policy trained on them"
)]
struct Cli {
    /// TOML configuration; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Threads for episode-parallel stages (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory the configured relative paths resolve against.
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic raw capture episodes for both embodiments.
    Synth,
    /// Filter, repair, smooth, and retarget raw episodes.
    Process,
    /// Assemble processed episodes into training datasets.
    Build,
    /// Draw co-training batches and print their composition.
    Sample {
        #[arg(long, default_value_t = 1)]
        batches: usize,
    },
    /// Train the action-chunk denoiser.
    Train,
    /// Roll out a policy in the closed-loop reach environment.
    Eval {
        #[arg(long, value_enum, default_value_t = commands::eval::PolicyKind::Diffusion)]
        policy: commands::eval::PolicyKind,
        /// Checkpoint directory (default: the training run's `final`).
        #[arg(long, value_name = "DIR")]
        checkpoint: Option<PathBuf>,
    },
    /// Summarize what is on disk at every pipeline stage.
    Stats,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(workers) = cli.workers {
        if workers > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build_global()
                .map_err(|e| CliError::Invalid(format!("cannot size worker pool: {e}")))?;
        }
    }
    let seed = cli.seed.unwrap_or(cfg.seed);
    let ctx = Ctx { cfg, seed, root: cli.out };
    match cli.command {
        Command::Synth => commands::synth::run(&ctx),
        Command::Process => commands::process::run(&ctx),
        Command::Build => commands::build::run(&ctx),
        Command::Sample { batches } => commands::sample::run(&ctx, batches),
        Command::Train => commands::train::run(&ctx),
        Command::Eval { policy, checkpoint } => commands::eval::run(&ctx, policy, checkpoint),
        Command::Stats => commands::stats::run(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(err.exit_code())
        }
    }
}
