use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use playalong::agent::Checkpoint;
use playalong::cli::{eval_checkpoint, midi, run_with, Overrides, RunConfig, FRAME_SECONDS};
use playalong::env::WorldScore;
use playalong::runlog::{correlate, RunLog};
use playalong::{Error, Result};

#[derive(Parser)]
#[command(name = "playalong", version, about = "Learn music transcription by playing along")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write a run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Progress line every N episodes (0 for none).
        #[arg(long, default_value_t = 100)]
        report: usize,
    },
    /// Play a checkpoint greedily without learning and report F1.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the per-episode log here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pearson correlation between episode reward and F1 in a run log.
    Correlate {
        #[arg(long)]
        runlog: PathBuf,
    },
    /// Convert a score JSON file to a Standard MIDI File.
    ExportMidi {
        #[arg(long)]
        score: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train { config, seed, episodes, out, report } => {
            let overrides = Overrides { seed, episodes, output_dir: out };
            let config = RunConfig::load(&config, &overrides)?;
            let outcome = run_with(&config, |row| {
                if report > 0 && (row.episode + 1) % report == 0 {
                    eprintln!(
                        "episode {:>6}  reward {:>9.4}  P {:.3}  R {:.3}  F1 {:.3}  H {:.3}  {:>7.1}s",
                        row.episode + 1,
                        row.mean_reward,
                        row.precision,
                        row.recall,
                        row.f1,
                        row.entropy,
                        row.wall_seconds
                    );
                }
            })?;
            if let Some(f1) = outcome.log.tail_mean(50, |r| r.f1) {
                println!("last-50 F1 {f1:.4}");
            }
            println!("wrote {}", config.output_dir.display());
        }
        Command::Eval { checkpoint, config, episodes, seed, out } => {
            let overrides = Overrides { seed, ..Overrides::default() };
            let config = RunConfig::load(&config, &overrides)?;
            let ck = Checkpoint::load(&checkpoint)?;
            let (log, _) = eval_checkpoint(&config, &ck, episodes)?;
            let mean = |f: fn(&playalong::runlog::RunRow) -> f64| log.tail_mean(log.len(), f).unwrap_or(0.0);
            println!(
                "episodes {}  reward {:.4}  P {:.4}  R {:.4}  F1 {:.4}",
                log.len(),
                mean(|r| r.mean_reward),
                mean(|r| r.precision),
                mean(|r| r.recall),
                mean(|r| r.f1)
            );
            if let Some(path) = out {
                std::fs::write(&path, log.to_csv()).map_err(|e| Error::Io { path, source: e })?;
            }
        }
        Command::Correlate { runlog } => {
            let log = RunLog::read(&runlog)?;
            match correlate(&log) {
                Some(r) => println!("{r:.6}"),
                None => println!("undefined (fewer than two rows or a constant column)"),
            }
        }
        Command::ExportMidi { score, out } => {
            let text = std::fs::read_to_string(&score).map_err(|e| Error::Io { path: score, source: e })?;
            let score = WorldScore::from_json(&text)?;
            midi::export_midi(&score.notes, FRAME_SECONDS, &out)?;
        }
    }
    Ok(())
}
