use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use uneven_cli::{error_line, Experiment};

#[derive(Parser)]
#[command(name = "uneven", version, about = "Train and evaluate classifiers under uneven annotation budgets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run only this seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write the synthetic pool, evaluation set and vocabulary.
    Gen,
    /// Allocate the label budget and write the split and its manifest.
    Split,
    /// Train and write the checkpoint and training log.
    Train,
    /// Evaluate a trained checkpoint.
    Eval,
    /// Calibrate a trained checkpoint and evaluate it.
    Calibrate,
    /// Train, evaluate and calibrate every seed, then summarize.
    Sweep,
    /// Summarize existing per-seed reports.
    Report,
}

fn run(cli: Cli) -> Result<()> {
    let Some(config) = cli.config else {
        anyhow::bail!(uneven::Error::InvalidConfig("--config is required".into()));
    };
    let exp = Experiment::load(&config, cli.out)?;
    let seeds = exp.seeds(cli.seed);
    match cli.command {
        Command::Gen => {
            for p in exp.gen()? {
                println!("{}", p.display());
            }
        }
        Command::Split => {
            for s in seeds {
                let m = exp.split(s)?;
                println!("seed {s}: {} ({} labels)", m.formula, m.total_labels);
            }
        }
        Command::Train => {
            for s in seeds {
                let (_, log) = exp.train(s)?;
                let last = log.entries.last().map_or(f64::NAN, |e| e.total);
                println!("seed {s}: {} iterations, final loss {last:.6}", log.entries.len());
            }
        }
        Command::Eval | Command::Calibrate => {
            for s in seeds {
                let r = if matches!(cli.command, Command::Eval) { exp.eval(s)? } else { exp.calibrate(s)? };
                println!("seed {s}: {}", serde_json::to_string(&r.summary)?);
            }
        }
        Command::Sweep => print!("{}", exp.sweep(&seeds)?.to_tsv()),
        Command::Report => print!("{}", exp.report_all()?.to_tsv()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let line = serde_json::json!({ "error": "usage", "message": e.to_string().trim() });
            eprintln!("{line}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
