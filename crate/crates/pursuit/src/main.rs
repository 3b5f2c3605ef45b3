use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pursuit::checkpoint::Checkpoint;
use pursuit::config::{self, parse_method, parse_team, RunConfig, Scenario, Settings};
use pursuit::core::rollout::Method;
use pursuit::error::{HarnessError, Result};
use pursuit::{record, render, run};

#[derive(Parser)]
#[command(name = "pursuit", version, about = "Multi-agent pursuit-evasion: training, evaluation and replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    ImageFrames,
}

#[derive(Subcommand)]
enum Command {
    /// Train one team against naive opponents.
    Train {
        /// Team sizes as PvE, e.g. 2v2.
        #[arg(long, default_value = "2v2")]
        scenario: String,
        /// pursuers or evaders.
        #[arg(long, default_value = "pursuers")]
        team: String,
        /// naive, ma-dqn, mapel-p2psr or mapel-rsr.
        #[arg(long)]
        method: String,
        /// key = value settings file; omitted keys keep the desk-scale defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "naive")]
        opponent: String,
        #[arg(long, default_value_t = 1000)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the first evaluation episode as a JSON-lines record.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Render a recorded episode.
    Replay {
        #[arg(long)]
        record: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Directory for image frames (default: `<record>.frames`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Pixels per cell for image frames.
        #[arg(long, default_value_t = 16)]
        scale: u32,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { scenario, team, method, config, seed, out } => {
            let scenario: Scenario = scenario.parse()?;
            let team = parse_team(&team)?;
            let method = parse_method(&method)?;
            let settings = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
                    config::parse(&text)?
                }
                None => Settings::default(),
            };
            let run = RunConfig::new(scenario, team, method, Method::Naive, settings, out, seed)?;
            let outcome = run::train(&run, |m| eprintln!("{}", run::metrics_row(m)))?;
            println!("metrics {}", outcome.metrics_path.display());
            println!("checkpoint {}", outcome.final_checkpoint.display());
        }
        Command::Eval { checkpoint, opponent, episodes, seed, record: record_path } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let report = run::evaluate_checkpoint(&ck, parse_method(&opponent)?, episodes, seed)?;
            print!("{}", run::report_text(&report));
            if let Some(path) = record_path {
                let rec = run::record_checkpoint_episode(&ck, seed)?;
                let file = fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
                let mut w = BufWriter::new(file);
                record::write_record(&mut w, &rec).and_then(|()| w.flush()).map_err(|e| HarnessError::io(&path, e))?;
            }
        }
        Command::Replay { record: path, format, out, scale } => {
            let file = fs::File::open(&path).map_err(|e| HarnessError::io(&path, e))?;
            let rec = record::read_record(BufReader::new(file))?;
            match format {
                Format::Text => {
                    for (i, frame) in render::text_frames(&rec)?.iter().enumerate() {
                        println!("step {i}\n{frame}");
                    }
                }
                Format::ImageFrames => {
                    let dir = out.unwrap_or_else(|| path.with_extension("frames"));
                    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
                    let frames = render::image_frames(&rec, scale)?;
                    for (i, img) in frames.iter().enumerate() {
                        img.save(dir.join(format!("frame-{i:04}.png")))?;
                    }
                    println!("{} frames in {}", frames.len(), dir.display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
