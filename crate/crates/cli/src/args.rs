use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use racelens_core::anchors::AnchorDistance;
use racelens_core::model::FeedbackReason;

#[derive(Debug, Parser)]
#[command(name = "racelens", version, about = "Race photo analysis engine")]
pub struct Cli {
    /// TOML config shared with the HTTP service.
    #[arg(long, global = true, env = "RACELENS_CONFIG")]
    pub config: Option<PathBuf>,

    /// Document store directory; overrides the config.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,

    /// Seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic event: scene sidecars, rendered images, roster
    /// and feedback.
    SynthGen(SynthGenArgs),
    /// Register and process every photo in a directory, then write one
    /// PhotoRecord JSON per photo.
    Process(ProcessArgs),
    /// Submit feedback for a photo, or a batch from a JSON file.
    Feedback(FeedbackArgs),
    /// Print the online metrics of an event.
    Metrics(MetricsArgs),
    /// Copy photos with feedback into an evaluation dataset.
    ExportFeedback(ExportArgs),
    /// Detection mAP at 0.5 and 0.5:0.95.
    EvaluateDetections(EvalDetectionsArgs),
    /// Overall and per-class accuracy.
    EvaluateClassification(EvalClassificationArgs),
    /// Wheel keypoint AP and AR.
    EvaluateKeypoints(EvalKeypointsArgs),
    /// Deterministic train/val/test split of a JSON array.
    Split(SplitArgs),
    /// K-means anchor shapes from a label file.
    Anchors(AnchorsArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthGenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub photos: usize,
    #[arg(long, default_value_t = 20)]
    pub teams: usize,
    #[arg(long, default_value = "synthetic")]
    pub event_id: String,
    #[arg(long, default_value_t = 0.01)]
    pub no_car_fraction: f64,
    #[arg(long, default_value_t = 0.01)]
    pub feedback_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub hidden_number_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub hidden_ground_fraction: f64,
    #[arg(long, default_value_t = 3)]
    pub max_cars: usize,
    #[arg(long, default_value_t = 0.0)]
    pub score_jitter: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0.0)]
    pub embedding_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub keypoint_noise: f64,
    /// Skip writing PNG images; sidecars alone drive the synthetic provider.
    #[arg(long)]
    pub no_render: bool,
}

#[derive(Debug, Args)]
pub struct ProcessArgs {
    /// Directory of images and/or `.scene.json` sidecars.
    pub dir: PathBuf,
    /// Event id; defaults to the directory name.
    #[arg(long)]
    pub event: Option<String>,
    /// Where PhotoRecord JSON files go; defaults to `<dir>/records`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON array of valid car numbers; defaults to `<dir>/roster.json` when
    /// present.
    #[arg(long)]
    pub roster: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Reprocess photos that already finished.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct FeedbackArgs {
    #[arg(long, required_unless_present = "file")]
    pub photo: Option<String>,
    #[arg(long, value_enum, required_unless_present = "file")]
    pub reason: Option<ReasonArg>,
    #[arg(long, default_value = "")]
    pub note: String,
    /// JSON array of `{photo_id, reason, note}`.
    #[arg(long, conflicts_with_all = ["photo", "reason"])]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReasonArg {
    WrongNumber,
    WrongTeam,
    WrongOrientation,
    MissedCar,
    SpuriousCar,
    WrongMeasurement,
    Other,
}

impl From<ReasonArg> for FeedbackReason {
    fn from(r: ReasonArg) -> Self {
        match r {
            ReasonArg::WrongNumber => FeedbackReason::WrongNumber,
            ReasonArg::WrongTeam => FeedbackReason::WrongTeam,
            ReasonArg::WrongOrientation => FeedbackReason::WrongOrientation,
            ReasonArg::MissedCar => FeedbackReason::MissedCar,
            ReasonArg::SpuriousCar => FeedbackReason::SpuriousCar,
            ReasonArg::WrongMeasurement => FeedbackReason::WrongMeasurement,
            ReasonArg::Other => FeedbackReason::Other,
        }
    }
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub event: String,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, required_unless_present = "all")]
    pub event: Option<String>,
    #[arg(long, conflicts_with = "event")]
    pub all: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GateArgs {
    /// Fail with exit code 4 when the gated metric is below this value.
    #[arg(long)]
    pub gate: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DetectionMetric {
    Map50,
    Map5095,
}

#[derive(Debug, Args)]
pub struct EvalDetectionsArgs {
    /// JSON array of predicted boxes.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Dataset (`{images, annotations}`) or a JSON array of boxes.
    #[arg(long)]
    pub ground_truth: PathBuf,
    #[arg(long, value_enum, default_value = "map50")]
    pub gate_metric: DetectionMetric,
    #[command(flatten)]
    pub gate: GateArgs,
}

#[derive(Debug, Args)]
pub struct EvalClassificationArgs {
    /// JSON array of `{predicted, true}`.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Classes to report even when absent from the data.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<String>,
    #[command(flatten)]
    pub gate: GateArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KeypointMetric {
    Ap,
    Ar,
}

#[derive(Debug, Args)]
pub struct EvalKeypointsArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub ground_truth: PathBuf,
    #[arg(long, default_value_t = racelens_core::eval::DEFAULT_FALLOFF)]
    pub falloff: f64,
    #[arg(long, value_enum, default_value = "ap")]
    pub gate_metric: KeypointMetric,
    #[command(flatten)]
    pub gate: GateArgs,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// JSON array of items.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    pub train: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val: f64,
    #[arg(long, default_value_t = 0.2)]
    pub test: f64,
    /// Directory for train.json, val.json and test.json; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DistanceArg {
    Iou,
    AspectRatio,
}

impl From<DistanceArg> for AnchorDistance {
    fn from(d: DistanceArg) -> Self {
        match d {
            DistanceArg::Iou => AnchorDistance::Iou,
            DistanceArg::AspectRatio => AnchorDistance::AspectRatio,
        }
    }
}

#[derive(Debug, Args)]
pub struct AnchorsArgs {
    /// JSON array of boxes: `[w, h]`, `{width, height}` or `{box: {...}}`.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "aspect-ratio")]
    pub distance: DistanceArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub workers: Option<usize>,
}
