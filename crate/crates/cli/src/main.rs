//! `deskew`: dataset generation, training, evaluation and rectification.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "deskew",
    version,
    about = "Document deskewing by corner regression"
)]
pub struct Cli {
    /// Seed for every random choice (dataset draws, weight init, shuffling)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for data generation and evaluation
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON file with per-subcommand defaults; command-line flags win
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log progress details to stderr
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset of warped documents with a manifest
    Generate(GenerateArgs),
    /// Train a corner-regression network on a generated dataset
    Train(TrainArgs),
    /// Evaluate a model on one split and report the mean displacement error
    Eval(EvalArgs),
    /// Rectify a photographed document with a trained model
    Deskew(DeskewArgs),
    /// Summarize a dataset manifest or a model file as JSON
    Inspect(InspectArgs),
    /// Train one network per loss and seed and tabulate validation errors
    CompareLosses(CompareArgs),
    /// Write procedural document pages and background textures
    MakeFixtures(FixturesArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Directory of document page images
    #[arg(long, value_name = "DIR")]
    pub docs: Option<PathBuf>,
    /// Background image directories, comma separated
    #[arg(long, value_name = "DIR[,DIR...]", value_delimiter = ',')]
    pub backgrounds: Vec<PathBuf>,
    /// Number of samples
    #[arg(long)]
    pub n: Option<usize>,
    /// Output directory for images and manifest.json
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Zero 30 px left/right and 40 px top/bottom bands, keeping annotations
    #[arg(long)]
    pub occlude_margins: bool,
    /// Emit single-channel images
    #[arg(long)]
    pub grayscale: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory containing manifest.json
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Model file to write [default: <dataset>/model.bin]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Loss history (JSON lines) [default: <out>.history.jsonl]
    #[arg(long, value_name = "FILE")]
    pub history: Option<PathBuf>,
    /// Channel width multiplier of the network [default: 0.25]
    #[arg(long)]
    pub width: Option<f64>,
    /// Loss function: l1, l2 or berhu [default: l1]
    #[arg(long)]
    pub loss: Option<String>,
    /// Threshold c of the berHu loss [default: 1.0]
    #[arg(long)]
    pub berhu_c: Option<f64>,
    /// Use the continuous berHu variant (r²+c²)/(2c) above c
    #[arg(long)]
    pub berhu_continuous: bool,
    /// Optimizer: adam or rmsprop [default: adam]
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Initial learning rate [default: 5e-4]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Number of epochs [default: 10]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 4]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Stop after this many optimizer steps
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Disable the plateau learning-rate schedule
    #[arg(long)]
    pub no_schedule: bool,
    /// Print a progress line every N steps [default: 10]
    #[arg(long, value_name = "N")]
    pub log_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Dataset directory containing manifest.json
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Split to evaluate: train, val or test [default: test]
    #[arg(long)]
    pub split: Option<String>,
    /// Report JSON to write [default: <dataset>/eval_<split>.json]
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeskewArgs {
    /// Input image (PNG or JPEG)
    #[arg(value_name = "INPUT")]
    pub input: PathBuf,
    /// Model file
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Output image [default: <input stem>.deskewed.png next to the input]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also write the predicted corners (original resolution) as JSON
    #[arg(long, value_name = "FILE")]
    pub dump_corners: Option<PathBuf>,
    /// Output size WxH [default: from the predicted quad's edge lengths]
    #[arg(long, value_name = "WxH")]
    pub size: Option<String>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Dataset directory containing manifest.json
    #[arg(
        long,
        value_name = "DIR",
        conflicts_with = "model",
        required_unless_present = "model"
    )]
    pub dataset: Option<PathBuf>,
    /// Model file
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Dataset directory containing manifest.json
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Losses to compare, comma separated [default: l1,l2]
    #[arg(long, value_delimiter = ',')]
    pub losses: Vec<String>,
    /// Seeds, comma separated; every loss runs with every seed [default: --seed or 0]
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Threshold c for berhu entries [default: 1.0]
    #[arg(long)]
    pub berhu_c: Option<f64>,
    /// Channel width multiplier [default: 0.25]
    #[arg(long)]
    pub width: Option<f64>,
    /// Learning rate [default: 5e-4]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs per run [default: 10]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 4]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Cap on optimizer steps per run
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Split used for the reported error [default: val]
    #[arg(long)]
    pub split: Option<String>,
    /// Also write the table as CSV
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    /// Output directory (receives docs/ and backgrounds/)
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Number of document pages
    #[arg(long, default_value_t = 8)]
    pub docs: usize,
    /// Number of background textures
    #[arg(long, default_value_t = 8)]
    pub backgrounds: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
