//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or invalid argument, 2 i/o or file
//! format, 3 numeric failure.

mod bench;
mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use bench::{cmd_bench, BenchArgs, BenchReport};
pub use commands::{
    cmd_adapt, cmd_analyze, cmd_enhance, cmd_init, cmd_mlpg, cmd_synthesize, cmd_train, cmd_vocode,
    units_to_track, StageTimer,
};

use crate::error::Error;

/// An error tagged with the pipeline stage that produced it.
#[derive(Debug, thiserror::Error)]
#[error("{stage}: {source}")]
pub struct CliError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self.source {
            Error::InvalidArgument(_) => 1,
            Error::Format { .. } | Error::Io { .. } => 2,
            Error::NotPositiveDefinite { .. }
            | Error::TrainingDiverged { .. }
            | Error::SynthesisFailed { .. } => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Attaches a stage name to library errors.
pub(crate) trait Stage<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> Stage<T> for crate::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError { stage, source })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lpcvoxel",
    version,
    about = "CPU real-time speech synthesis back-end"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract 20-dimensional features (and optionally excitation codes) from a WAV file.
    Analyze(AnalyzeArgs),
    /// Units file to WAV through the whole pipeline.
    Synthesize(SynthesizeArgs),
    /// Feature file to WAV with the neural vocoder.
    Vocode(VocodeArgs),
    /// Apply formant enhancement to every frame of a feature file.
    Enhance(EnhanceArgs),
    /// Units file to feature file via the acoustic model and parameter generation.
    Mlpg(MlpgArgs),
    /// Train a synthesizer network on (units, features) pairs.
    Train(TrainArgs),
    /// Adapt an existing synthesizer network with early stopping.
    Adapt(AdaptArgs),
    /// Measure the vocoder real-time factor.
    Bench(BenchArgs),
    /// Write randomly initialized weights.
    Init(InitArgs),
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one μ-law excitation code per sample to this path.
    #[arg(long)]
    pub excitation: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub units: PathBuf,
    #[arg(long)]
    pub acoustic: PathBuf,
    #[arg(long)]
    pub vocoder: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Skip formant enhancement.
    #[arg(long)]
    pub no_enhance: bool,
    /// Optional TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VocodeArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub vocoder: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EnhanceArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.4)]
    pub alpha: f64,
    /// First cepstral index that is scaled.
    #[arg(long, default_value_t = 2)]
    pub first_scaled: usize,
}

#[derive(Debug, Clone, Args)]
pub struct MlpgArgs {
    #[arg(long)]
    pub units: PathBuf,
    #[arg(long)]
    pub acoustic: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainingFlags {
    /// Manifest with one `units_path features_path` pair per line.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the loss history as CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainingFlags,
    /// Start from these weights instead of a random initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AdaptArgs {
    #[command(flatten)]
    pub flags: TrainingFlags,
    #[arg(long)]
    pub base: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum WeightKind {
    Synthesizer,
    Vocoder,
}

#[derive(Debug, Clone, Args)]
pub struct InitArgs {
    #[arg(long, value_enum)]
    pub kind: WeightKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Vocoder only: fraction of recurrent blocks to prune.
    #[arg(long)]
    pub sparsity: Option<f64>,
    /// Synthesizer only: label vocabulary size.
    #[arg(long)]
    pub vocab: Option<usize>,
    /// Synthesizer only: use the small test sizes.
    #[arg(long)]
    pub toy: bool,
}

/// Worker count from `LPC_VOXEL_THREADS`, or `default` when unset or invalid.
pub fn thread_count(default: usize) -> usize {
    std::env::var("LPC_VOXEL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(default)
}

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Synthesize(a) => cmd_synthesize(&a).map(|_| ()),
        Command::Vocode(a) => cmd_vocode(&a),
        Command::Enhance(a) => cmd_enhance(&a),
        Command::Mlpg(a) => cmd_mlpg(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Adapt(a) => cmd_adapt(&a),
        Command::Bench(a) => cmd_bench(&a).map(|r| r.print()),
        Command::Init(a) => cmd_init(&a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let default_threads = if matches!(cli.command, Command::Bench(_)) {
        1
    } else {
        0
    };
    let threads = thread_count(default_threads);
    if threads > 0 {
        // a second initialization only happens in tests; the existing pool is kept
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
