//! The `credal` command line.
//!
//! Every subcommand reads and writes the file formats of `credal-core`.
//! Failures print one line `error: <Code>: <message>` to stderr and exit
//! with 2 (usage), 3 (data) or 4 (numeric).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod files;

pub use files::{ModelFile, PredictorFile, SplitRecord};

/// Environment variable overriding the grid-size cap.
pub const RESOURCE_CAP_ENV: &str = "CREDAL_RESOURCE_CAP";

#[derive(Debug, Parser)]
#[command(name = "credal", version, about = "Conformal credal set prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic softmax-linear dataset.
    Generate(GenerateArgs),
    /// Replace labels by relative frequencies of m samples each.
    Corrupt(CorruptArgs),
    /// Convert a CSV dataset (features, then k label columns) to JSON lines.
    Convert(ConvertArgs),
    /// Split a dataset and train a first- or second-order model.
    Train(TrainArgs),
    /// Calibrate a trained model's threshold on the calibration split.
    Calibrate(CalibrateArgs),
    /// Build a credal region for one input or measure test coverage.
    Predict(PredictArgs),
    /// Run an experiment sweep described by a JSON spec.
    Evaluate(EvaluateArgs),
    /// Bounded-noise threshold adjustment and noise estimation.
    AdjustNoise(AdjustNoiseArgs),
    /// Render a three-class credal region as SVG.
    Plot(PlotArgs),
    /// Compare analytic loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 1500)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the coefficient matrix as JSON.
    #[arg(long)]
    pub beta_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub m: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `first` (softmax) or `second` (Dirichlet).
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub data: PathBuf,
    /// Seeds both the split and the model initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train, calibration and test proportions (normalized to sum to 1).
    #[arg(long, default_value = "1,1,1")]
    pub split: String,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, default_value = "model.json")]
    pub model: PathBuf,
    /// The dataset the model was trained from; its calibration split is used.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Calibrate on every row of this file instead.
    #[arg(long, conflicts_with = "data")]
    pub calib_data: Option<PathBuf>,
    #[arg(long)]
    pub score: String,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value = "predictor.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, default_value = "predictor.json")]
    pub predictor: PathBuf,
    /// Comma-separated feature vector.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Row of `--data` to predict for.
    #[arg(long)]
    pub row: Option<usize>,
    /// Materialize the region on a lattice with this many subdivisions.
    #[arg(long, default_value_t = 0)]
    pub grid_n: usize,
    /// Report test coverage on `--data` instead of building a region.
    #[arg(long)]
    pub coverage: bool,
    /// With `--coverage`, use every row rather than the recorded test split.
    #[arg(long)]
    pub all_rows: bool,
    /// With `--coverage`, check `clean` (default) or `noisy` labels.
    #[arg(long, default_value = "clean")]
    pub target: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// One CSV row per cell.
    #[arg(long, default_value = "report.csv")]
    pub out: PathBuf,
    /// Cells nested by kind, alpha, m and seed.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Aggregates over seeds.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdjustNoiseArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// A predictor calibrated on noisy labels at the adjusted rate.
    #[arg(long)]
    pub predictor: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Estimate how often clean and noisy scores differ by less than
    /// epsilon on `--data` (which must carry clean labels).
    #[arg(long)]
    pub estimate: bool,
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub region: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated ground-truth distribution.
    #[arg(long)]
    pub truth: Option<String>,
    /// Take the ground truth from this dataset row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub row: Option<usize>,
    /// Lattice used when the region file has no mask.
    #[arg(long, default_value_t = 100)]
    pub grid_n: usize,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    /// Omit the prediction marker or contours.
    #[arg(long)]
    pub no_prediction: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds to check.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("error: Usage: {first}");
            for line in rendered.lines().skip(1) {
                eprintln!("{line}");
            }
            return 2;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {}: {}", e.code(), e.to_string().replace('\n', " "));
            e.category().exit_code()
        }
    }
}
