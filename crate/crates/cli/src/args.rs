use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use trn_core::dataio::{Split, SyntheticSpec};
use trn_core::model::{FusionVariant, Stream};
use trn_core::TrainConfig;

use crate::commands::{GradcheckConfig, ModelSection};

/// Online action detection with temporal recurrent networks.
#[derive(Debug, Parser)]
#[command(name = "trn", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (features, annotations, class map, manifest).
    Synth(SynthArgs),
    /// Train a model on a manifest and write a checkpoint.
    Train(TrainArgs),
    /// Run a checkpoint chunk by chunk and write a prediction dump.
    #[command(visible_alias = "infer")]
    Stream(StreamArgs),
    /// Score a prediction dump against ground truth.
    Eval(EvalArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Print the published reference rows.
    Report(ReportArgs),
}

fn synth_default() -> SyntheticSpec {
    SyntheticSpec::default()
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON spec file; flags given on the command line override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = synth_default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = synth_default().num_actions)]
    pub num_actions: usize,
    #[arg(long, default_value_t = synth_default().appearance_dim)]
    pub appearance_dim: usize,
    #[arg(long, default_value_t = synth_default().motion_dim)]
    pub motion_dim: usize,
    /// Emit a pose stream.
    #[arg(long, default_value_t = synth_default().pose, action = clap::ArgAction::Set)]
    pub pose: bool,
    #[arg(long, default_value_t = synth_default().sigma_ratio)]
    pub sigma_ratio: f64,
    #[arg(long, default_value_t = synth_default().mean_segment_len)]
    pub mean_segment_len: f64,
    #[arg(long, default_value_t = synth_default().background_prior)]
    pub background_prior: f64,
    #[arg(long, default_value_t = synth_default().train_videos)]
    pub train_videos: usize,
    #[arg(long, default_value_t = synth_default().test_videos)]
    pub test_videos: usize,
    /// Chunks per video.
    #[arg(long, default_value_t = synth_default().video_len)]
    pub video_len: usize,
    #[arg(long, default_value_t = synth_default().chunk_size)]
    pub chunk_size: usize,
    #[arg(long, default_value_t = synth_default().fps)]
    pub fps: f64,
}

fn train_default() -> TrainConfig {
    TrainConfig::default()
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// JSON file with `model` and `train` sections; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch metrics (JSON lines) [default: <out>.metrics.jsonl]
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long, default_value_t = train_default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = train_default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = train_default().learning_rate)]
    pub lr: f64,
    #[arg(long, default_value_t = train_default().weight_decay)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = train_default().batch_size)]
    pub batch_size: usize,
    /// Chunks per training window.
    #[arg(long, default_value_t = train_default().seq_len)]
    pub seq_len: usize,
    #[arg(long, default_value_t = train_default().decoder_steps)]
    pub decoder_steps: usize,
    #[arg(long, default_value_t = ModelSection::default().hidden_size)]
    pub hidden_size: usize,
    /// ONE_STREAM, TWO_STREAM or FUSED_TWO_STREAM.
    #[arg(long, default_value_t = ModelSection::default().fusion)]
    pub fusion: FusionVariant,
    /// Stream used by ONE_STREAM.
    #[arg(long, default_value_t = ModelSection::default().one_stream, value_parser = parse_stream)]
    pub one_stream: Stream,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Feature file per stream, as STREAM=PATH (repeatable).
    #[arg(long, value_parser = parse_stream_path, conflicts_with = "manifest")]
    pub features: Vec<(Stream, PathBuf)>,
    /// Video id written to the dump with --features [default: file stem]
    #[arg(long, requires = "features")]
    pub video_id: Option<String>,
    /// Run every video of one split of a manifest.
    #[arg(long, required_unless_present = "features")]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
    /// Prediction dump path.
    #[arg(long)]
    pub out: PathBuf,
    /// Process whole videos at once instead of chunk by chunk.
    #[arg(long)]
    pub batch: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dump: PathBuf,
    /// Annotation file (video, class, start, end).
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub classmap: PathBuf,
    /// Score ambiguous chunks instead of dropping them.
    #[arg(long)]
    pub keep_ambiguous: bool,
    /// Weight each chunk by its frame count.
    #[arg(long)]
    pub frames: bool,
    /// Row label.
    #[arg(long, default_value = "model")]
    pub label: String,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// JSON file with gradcheck settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = GradcheckConfig::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = GradcheckConfig::default().fusion)]
    pub fusion: FusionVariant,
    #[arg(long, default_value_t = GradcheckConfig::default().hidden_size)]
    pub hidden_size: usize,
    /// Sequence length.
    #[arg(long, default_value_t = GradcheckConfig::default().seq_len)]
    pub seq_len: usize,
    #[arg(long, default_value_t = GradcheckConfig::default().decoder_steps)]
    pub decoder_steps: usize,
    #[arg(long, default_value_t = GradcheckConfig::default().num_actions)]
    pub num_actions: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = GradcheckConfig::default().fd_step)]
    pub fd_step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = GradcheckConfig::default().tolerance)]
    pub tolerance: f64,
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Only print this table (I, II or III).
    #[arg(long)]
    pub table: Option<String>,
}

fn parse_stream(s: &str) -> Result<Stream, String> {
    Stream::ALL
        .into_iter()
        .find(|k| k.name() == s.to_ascii_lowercase())
        .ok_or_else(|| format!("unknown stream '{s}' (appearance, motion, pose)"))
}

fn parse_stream_path(s: &str) -> Result<(Stream, PathBuf), String> {
    let (k, p) = s
        .split_once('=')
        .ok_or_else(|| format!("expected STREAM=PATH, got '{s}'"))?;
    Ok((parse_stream(k)?, PathBuf::from(p)))
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split '{s}' (train, test)")),
    }
}
