use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "handpose", version, about = "Multi-view video 3D hand pose pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file of `section.key=value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set stage2.lr=0.003`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Worker threads for generation, embedding caching and evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory; the effective config is echoed there.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-view dataset and its manifest.
    Generate,
    /// Two-stage training.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or the labels themselves) on a dataset.
    Eval(EvalArgs),
    /// Run an ablation grid.
    Ablate(AblateArgs),
    /// Finite-difference check of every primitive and module.
    Gradcheck(GradcheckArgs),
    /// Print the header of a dataset or checkpoint.
    Inspect(InspectArgs),
}

/// Applied to every stage being trained.
#[derive(Debug, Args, Default)]
pub struct StageFlags {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub decay_period: Option<usize>,
    #[arg(long)]
    pub decay_factor: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `both`, `1` or `2`.
    #[arg(long)]
    pub stages: Option<String>,
    /// Stage 1 checkpoint to start Stage 2 from.
    #[arg(long)]
    pub stage1_checkpoint: Option<PathBuf>,
    /// Train on the train side of this protocol (`all` uses every clip).
    #[arg(long)]
    pub protocol: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    #[command(flatten)]
    pub stage: StageFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub protocol: Option<String>,
    /// `train`, `test` or `all`.
    #[arg(long)]
    pub side: Option<String>,
    /// Score the dataset's own labels instead of a checkpoint.
    #[arg(long)]
    pub ground_truth: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `window-sizes`, `adjacency-modes`, `ablation-baselines` or `recurrent-variants`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub protocol: Option<String>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 3)]
    pub trials: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
}
