use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use dashsim::netmodel::synthetic::{self, ProfileShape, BUILTIN_DURATION_S};
use dashsim::runner::{self, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(
    name = "dashsim",
    version,
    about = "Low-latency live DASH ABR simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment matrix and write runs.csv / aggregate.csv.
    Simulate {
        /// Experiment config (JSON). Omitted fields take the default matrix.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one P.1203 mode-0 input file per run.
        #[arg(long)]
        export_p1203: bool,
        /// Write one JSONL event log per run.
        #[arg(long)]
        emit_logs: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Bandwidth profile utilities.
    Profiles {
        #[command(subcommand)]
        command: ProfilesCommand,
    },
}

#[derive(Subcommand)]
enum ProfilesCommand {
    /// Write a synthetic profile as `time_s,bandwidth_kbps` CSV.
    Generate {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        shape: ProfileShape,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = BUILTIN_DURATION_S)]
        duration: f64,
    },
}

fn simulate(
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    export_p1203: bool,
    emit_logs: bool,
    workers: Option<usize>,
) -> anyhow::Result<()> {
    let config = match config {
        Some(path) => ExperimentConfig::from_json_file(&path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if workers == Some(0) {
        anyhow::bail!("--workers must be at least 1");
    }
    let opts = RunOptions {
        out_dir: out,
        export_p1203,
        emit_logs,
        workers,
    };
    let results = runner::run_all(&config, &opts)?;
    let dir = opts.out_dir.or(config.output_dir).unwrap_or_default();
    eprintln!("{} sessions written to {}", results.len(), dir.display());
    Ok(())
}

fn generate(seed: u64, shape: ProfileShape, out: PathBuf, duration: f64) -> anyhow::Result<()> {
    if !(duration > 0.0) {
        anyhow::bail!("--duration must be positive");
    }
    let profile = synthetic::generate(shape, seed, duration);
    let file =
        std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    profile.write_csv(std::io::BufWriter::new(file))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate {
            config,
            out,
            export_p1203,
            emit_logs,
            workers,
        } => simulate(config, out, export_p1203, emit_logs, workers),
        Command::Profiles {
            command:
                ProfilesCommand::Generate {
                    seed,
                    shape,
                    out,
                    duration,
                },
        } => generate(seed, shape, out, duration),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
