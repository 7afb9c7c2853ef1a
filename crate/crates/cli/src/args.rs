use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "mvlidarnet",
    version,
    about = "Two-stage LiDAR segmentation and detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-point seg7 labels for every `.bin` scan in a directory.
    Segment(BatchArgs),
    /// Detections, drivable mask and BEV image for every `.bin` scan.
    Detect(BatchArgs),
    /// mIoU of `.label` predictions against ground truth.
    EvalSeg(EvalSegArgs),
    /// AP of detection text files against ground truth.
    EvalDet(EvalDetArgs),
    /// Per-stage wall time over preloaded scans.
    Bench(BenchArgs),
    /// Top-down image of a scan with optional detections.
    Viz(VizArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// Pipeline config file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// First-stage weight blob; overrides the config.
    #[arg(long)]
    pub weights1: Option<PathBuf>,
    /// Second-stage weight blob; overrides the config.
    #[arg(long)]
    pub weights2: Option<PathBuf>,
    /// Use seeded random weights instead of blobs.
    #[arg(long)]
    pub random_weights: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write kNN-smoothed labels.
    #[arg(long)]
    pub knn: bool,
    /// Detection confidence threshold for every class.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct BatchArgs {
    /// Directory of `.bin` scans.
    pub input: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum GtFormat {
    /// Raw SemanticKITTI ids, remapped through the label map.
    #[default]
    Raw,
    /// Already seg7 ids.
    Seg7,
}

#[derive(Debug, Clone, Args)]
pub struct EvalSegArgs {
    /// Directory of predicted `.label` files.
    pub pred: PathBuf,
    /// Directory of ground-truth `.label` files with matching names.
    pub gt: PathBuf,
    #[arg(long, value_enum, default_value_t = GtFormat::Raw)]
    pub gt_format: GtFormat,
    /// `raw = class` remapping table for raw ground truth.
    #[arg(long)]
    pub label_map: Option<PathBuf>,
    /// Directory for `metrics.json` and `metrics.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecallPoints {
    #[value(name = "40")]
    P40,
    #[value(name = "11")]
    P11,
}

#[derive(Debug, Clone, Args)]
pub struct EvalDetArgs {
    /// Directory of predicted detection `.txt` files.
    pub pred: PathBuf,
    /// Directory of ground-truth `.txt` files with matching names.
    pub gt: PathBuf,
    /// Recall sample points.
    #[arg(long, value_enum, default_value_t = RecallPoints::P40)]
    pub points: RecallPoints,
    /// Directory for `metrics.json` and `metrics.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Directory of `.bin` scans; synthetic scenes when absent.
    #[arg(long)]
    pub scans: Option<PathBuf>,
    /// Synthetic scenes to generate.
    #[arg(long, default_value_t = 1)]
    pub frames: usize,
    /// Timed runs.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Untimed runs first.
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    /// Directory for `bench.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VizArgs {
    /// A `.bin` scan.
    pub scan: PathBuf,
    /// Detection text file to draw.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Pipeline config, for the BEV geometry.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for `<stem>.bev.ppm`.
    #[arg(long)]
    pub out: PathBuf,
}
