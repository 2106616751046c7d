//! Command line, file formats and the HTTP chat backend for `microswim-core`.
//!
//! Every subcommand resolves a [`config::RunConfig`] (defaults, then `--config`, then
//! flags), writes a `config.resolved.toml` snapshot into `--out-dir`, and emits
//! transcripts as JSON Lines plus plot-ready CSV tables.

pub mod commands;
pub mod config;
pub mod error;
pub mod http;
pub mod io;
pub mod runner;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use microswim_core::llm::Sentence;
use microswim_core::{Direction, ModelKind};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "microswim", version, about = "Simulate, train and evaluate low-Reynolds-number swimmers")]
pub struct Cli {
    /// TOML file with `env`, `prompt`, `q`, `success`, `sweep` and `http` tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed; run k uses seed + k.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, value_enum)]
    pub model: Option<ModelArg>,
    /// Target direction: +x or -x.
    #[arg(long, global = true, value_parser = parse_direction, allow_hyphen_values = true)]
    pub direction: Option<Direction>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Purcell,
    Ng,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Purcell => ModelKind::Purcell,
            ModelArg::Ng => ModelKind::Ng,
        }
    }
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "+x" | "x" | "plus" | "+" => Ok(Direction::PlusX),
        "-x" | "minus" | "-" => Ok(Direction::MinusX),
        _ => Err(format!("expected +x or -x, got {s:?}")),
    }
}

fn parse_sentence(s: &str) -> Result<Sentence, String> {
    Sentence::parse(s).ok_or_else(|| format!("expected one of S1..S5, got {s:?}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Scripted,
    Random,
    Replay,
    Http,
}

#[derive(Debug, Args)]
pub struct BackendOpts {
    #[arg(long, value_enum, default_value = "scripted")]
    pub backend: BackendArg,
    /// Recorded replies (JSON Lines) for `--backend replay`.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub zeta: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Play a fixed gait and report the displacement.
    Simulate {
        /// `signature`, `reverse`, or comma-separated action ids (0-4).
        #[arg(long, default_value = "signature")]
        cycle: String,
        #[arg(long, default_value_t = 1)]
        cycles: usize,
        #[arg(long)]
        zeta: Option<f64>,
    },
    /// Calibrate the velocity formula against resistive-force theory and rank periodic gaits.
    Oracle {
        #[arg(long, default_value_t = 4)]
        max_len: usize,
        #[arg(long, default_value_t = 400)]
        segments: usize,
    },
    /// Tabular Q-learning runs.
    TrainQ {
        #[arg(long, default_value_t = 1)]
        runs: usize,
    },
    /// Prompted-controller episodes.
    TrainLlm {
        #[command(flatten)]
        opts: BackendOpts,
        /// Omit one prompt sentence.
        #[arg(long, value_delimiter = ',', value_parser = parse_sentence)]
        omit: Vec<Sentence>,
    },
    /// Success rate and displacement over noise levels.
    NoiseSweep {
        #[command(flatten)]
        opts: BackendOpts,
        /// Comma-separated noise levels; may be empty.
        #[arg(long, default_value = "0,1,2,3")]
        levels: String,
    },
    /// Remove one prompt sentence at a time.
    Ablate {
        #[command(flatten)]
        opts: BackendOpts,
        #[arg(long, value_delimiter = ',', value_parser = parse_sentence, default_value = "S1,S2,S3,S4,S5")]
        sentences: Vec<Sentence>,
    },
    /// Success rate and displacement over history lengths.
    NhtSweep {
        #[command(flatten)]
        opts: BackendOpts,
        /// Comma-separated history lengths; may be empty.
        #[arg(long, default_value = "0,1,2,3,4,5,6")]
        values: String,
    },
}

/// Parse `argv` (including the program name), run, and return the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
