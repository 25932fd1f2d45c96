//! Command-line front end of `fdrcast`: argument definitions and command
//! implementations. The binary in `main.rs` only parses and dispatches, so the
//! same commands can be driven in-process.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fdrcast_core::data::{SplitSpec, TraceFormat};
use fdrcast_core::models::ModelKind;

pub mod commands;
pub mod manifest;

pub use commands::UsageError;

pub const OUTPUT_ROOT_ENV: &str = "FDRCAST_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "fdrcast", version, about = "Frame delivery ratio forecasting pipeline")]
pub struct Cli {
    /// Parent directory for outputs when a command is run without -o; each
    /// command then writes to <root>/<command>.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV, default_value = "fdrcast-out")]
    pub output_root: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic outcome trace from a Gilbert-Elliott channel.
    Simulate(SimulateArgs),
    /// Split a trace chronologically into a dataset directory.
    Prepare(PrepareArgs),
    /// Train one model and write its best-validation checkpoint.
    Train(TrainArgs),
    /// Grid-search batch size, width and input length.
    Tune(TuneArgs),
    /// Prediction-error statistics on the test split.
    Evaluate(EvaluateArgs),
    /// Single-window inference latency and memory.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Named parameter set ("paper-like").
    #[arg(long, conflicts_with_all = ["p_gb", "p_bg", "s_good", "s_bad"])]
    pub preset: Option<String>,
    /// Good-to-bad transition probability.
    #[arg(long, required_unless_present = "preset")]
    pub p_gb: Option<f64>,
    /// Bad-to-good transition probability.
    #[arg(long, required_unless_present = "preset")]
    pub p_bg: Option<f64>,
    /// Delivery probability in the good state.
    #[arg(long, required_unless_present = "preset")]
    pub s_good: Option<f64>,
    /// Delivery probability in the bad state.
    #[arg(long, required_unless_present = "preset")]
    pub s_bad: Option<f64>,
    /// Number of samples.
    #[arg(short = 'n', long = "samples")]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// bitline or csv.
    #[arg(long, default_value = "bitline")]
    pub format: TraceFormat,
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Trace file (.bits bitline or .csv).
    #[arg(long)]
    pub trace: PathBuf,
    /// Model preset supplying the input length and horizon defaults.
    #[arg(long)]
    pub preset: Option<String>,
    /// Pattern length l (overrides the preset).
    #[arg(long)]
    pub input_length: Option<usize>,
    /// Target horizon N_f in samples (overrides the preset).
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, default_value_t = fdrcast_core::training::DEFAULT_TRAIN_STRIDE)]
    pub train_stride: usize,
    /// Stride for the validation and test splits.
    #[arg(long, default_value_t = 1)]
    pub eval_stride: usize,
    /// Chronological train,validation,test fractions.
    #[arg(long, default_value = "0.5,0.1667,0.3333")]
    pub split: SplitSpec,
    /// Seconds between consecutive outcomes.
    #[arg(long, default_value_t = fdrcast_core::data::DEFAULT_SAMPLE_PERIOD_S)]
    pub sample_period: f64,
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// cnn or lstm.
    pub kind: ModelKind,
    /// Dataset directory written by `prepare`.
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to paper-<kind>.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Filters (CNN) or units (LSTM).
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub input_length: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Seeds weight initialization and shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    pub kind: ModelKind,
    #[arg(long, required_unless_present = "stub_losses")]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub batch_sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<usize>>,
    /// Trials trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Master seed; each trial derives its own from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Epoch budget per trial (at least 6). Defaults to the paper preset's.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = fdrcast_core::training::DEFAULT_INITIAL_LR)]
    pub lr: f64,
    #[arg(long, default_value_t = fdrcast_core::training::DEFAULT_PATIENCE)]
    pub patience: usize,
    /// Replace training with deterministic synthetic loss curves.
    #[arg(long, hide = true)]
    pub stub_losses: bool,
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint file; repeat for several models.
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// Timed predictions per model (at least 100).
    #[arg(long, default_value_t = fdrcast_core::eval::MIN_REPETITIONS)]
    pub reps: usize,
    /// Draw patterns from this dataset's test split instead of a simulated trace.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Distinct patterns cycled through during timing.
    #[arg(long, default_value_t = 32)]
    pub patterns: usize,
    /// Seed of the simulated pattern trace.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
}

/// Exit code for a failed command: 2 for usage errors, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<fdrcast_core::Error>() {
        Some(fdrcast_core::Error::InvalidParameter(_)) => 2,
        _ => 1,
    }
}

/// Runs one parsed command. Outputs default to `<output_root>/<command>`.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    let root = cli.output_root;
    let out = |given: &Option<PathBuf>, name: &str| given.clone().unwrap_or_else(|| root.join(name));
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a, &out(&a.out, "simulate")),
        Command::Prepare(a) => commands::prepare(a, &out(&a.out, "prepare")),
        Command::Train(a) => commands::train(a, &out(&a.out, "train")),
        Command::Tune(a) => commands::tune(a, &out(&a.out, "tune")),
        Command::Evaluate(a) => commands::evaluate(a, &out(&a.out, "evaluate")),
        Command::Bench(a) => commands::bench(a, &out(&a.out, "bench")),
    }
}

/// Parses `args` (including the program name) and runs the command; parse
/// failures become [`UsageError`]s.
pub fn run_from<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = Cli::try_parse_from(args).map_err(|e| UsageError(e.to_string()))?;
    run(cli)
}
