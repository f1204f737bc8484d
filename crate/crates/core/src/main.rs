use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use boussinesq::config::RunConfig;
use boussinesq::runner::{exit_code, run, Job, RunOptions, EXIT_CONFIG};

#[derive(Parser)]
#[command(version, about = "Boussinesq forward, oracle and inverse runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time-step the finite-element model and write snapshots and energy.
    Forward(JobArgs),
    /// Reconstruct initial fields from final-time observations.
    Inverse(JobArgs),
    /// Compare against the Green's-function Picard solver under refinement.
    Oracle(JobArgs),
    /// Energy series only.
    Energy(JobArgs),
}

#[derive(Args)]
struct JobArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory, overriding `output.directory`.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Replace an existing output directory.
    #[arg(long)]
    overwrite: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (job, args) = match cli.command {
        Command::Forward(a) => (Job::Forward, a),
        Command::Inverse(a) => (Job::Inverse, a),
        Command::Oracle(a) => (Job::Oracle, a),
        Command::Energy(a) => (Job::Energy, a),
    };
    let cfg = match RunConfig::from_file(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let opts = RunOptions {
        output: args.output,
        overwrite: args.overwrite,
    };
    match run(job, &cfg, &opts) {
        Ok(outcome) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome.manifest.summary).unwrap_or_default()
            );
            println!("wrote {}", outcome.directory.display());
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
