use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use pcrseg_cli::{load, run, CliError, Command};

/// Breast DCE-MRI tumor segmentation and pCR prediction pipeline.
#[derive(Parser)]
#[command(name = "pcrseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Pipeline configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// `section.key=value` override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic phantom dataset.
    GenPhantoms,
    /// Cross-validated training of the small-kernel segmenter.
    TrainSeg,
    /// Kernel upsampling of the best fold, then fine-tuning on all training cases.
    UpkernFinetune,
    /// Held-out segmentation metrics and predicted masks.
    PredictEval {
        /// Also score the mean-probability ensemble of all models.
        #[arg(long)]
        ensemble: bool,
    },
    /// Radiomics feature table for every case.
    Radiomics,
    /// Correlation filter and forward selection on the training split.
    SelectFeatures,
    /// Train and calibrate the pCR classifier.
    TrainPcr,
    /// Held-out pCR metrics with subgroup breakdown.
    EvalPcr,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::usage(first).line());
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let path = cli.config.ok_or_else(|| CliError::usage("--config is required"))?;
    let mut sets = cli.set;
    let command = match cli.command {
        Cmd::GenPhantoms => Command::GenPhantoms,
        Cmd::TrainSeg => Command::TrainSeg,
        Cmd::UpkernFinetune => Command::UpkernFinetune,
        Cmd::PredictEval { ensemble } => {
            if ensemble {
                sets.push("eval.ensemble=true".into());
            }
            Command::PredictEval
        }
        Cmd::Radiomics => Command::Radiomics,
        Cmd::SelectFeatures => Command::SelectFeatures,
        Cmd::TrainPcr => Command::TrainPcr,
        Cmd::EvalPcr => Command::EvalPcr,
    };
    let cfg = load(&path, cli.seed, cli.threads, &sets)?;
    let summary = run(command, &cfg)?;
    println!("{}: {summary}", command.name());
    Ok(())
}
