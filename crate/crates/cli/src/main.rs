use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod util;

#[derive(Parser)]
#[command(name = "gns", version, about = "Granular-flow GNS pipeline: MPM data, training, FiLM adaptation, evaluation and inversion")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the MPM oracle for every (material, seed) pair.
    Generate(GenerateArgs),
    /// Train every parameter group of a fresh model (or resume one).
    Pretrain(PretrainArgs),
    /// Fine-tune the groups matched by --unlock on new-material data.
    Finetune(FinetuneArgs),
    /// Attach FiLM generators to a frozen base and train them on several materials.
    TrainFilm(TrainFilmArgs),
    /// Roll a checkpoint out from the first frames of a trajectory.
    Rollout(RolloutArgs),
    /// One-step, rollout, energy and MPED metrics over test trajectories.
    Eval(EvalArgs),
    /// Update-magnitude CDFs between two checkpoints.
    Sensitivity(SensitivityArgs),
    /// Bayesian-optimization estimate of a material parameter.
    Invert(InvertArgs),
    /// PCA of FiLM (gamma, beta) over a kappa sweep.
    Pca(PcaArgs),
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 144 particles, 0.5 m box, 101 frames at 5 ms.
    Lab,
    /// 576 particles, 1 m box, 201 frames at 2.5 ms.
    Default,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RoleArg {
    Pretrain,
    Adapt,
    Test,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Friction,
    Cohesion,
}

#[derive(Args, Debug, Serialize)]
pub struct GenerateArgs {
    /// MPM config JSON; overrides --preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "lab")]
    pub preset: Preset,
    /// `friction=20,cohesion=0.1,...` or a material JSON file; repeatable.
    #[arg(long, required = true)]
    pub material: Vec<String>,
    #[arg(long, value_enum, default_value = "pretrain")]
    pub role: RoleArg,
    /// Dataset directory; the manifest there is created or extended.
    #[arg(long)]
    pub out: PathBuf,
    /// Inclusive seed range `a..b` (or one seed).
    #[arg(long, default_value = "0..0")]
    pub seeds: String,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Vary column width, height and position with the seed.
    #[arg(long)]
    pub vary_column: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainCommon {
    /// Dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// TrainConfig JSON; flags below override it.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub samples_per_epoch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep only frames up to this multiple of the collapse time.
    #[arg(long)]
    pub window_tau_multiple: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub common: TrainCommon,
    #[arg(long, value_enum, default_value = "pretrain")]
    pub role: RoleArg,
    /// GnsConfig JSON.
    #[arg(long)]
    pub gns_config: Option<PathBuf>,
    #[arg(long, default_value_t = 0.02)]
    pub radius: f64,
    /// Continue training this checkpoint; epoch numbering carries on.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub common: TrainCommon,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "adapt")]
    pub role: RoleArg,
    /// Group-name globs left trainable, e.g. "processor.block_1.*"; repeatable.
    #[arg(long, required = true)]
    pub unlock: Vec<String>,
    /// Test trajectories (same manifest) for the reported test loss.
    #[arg(long, value_enum)]
    pub test_role: Option<RoleArg>,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainFilmArgs {
    #[command(flatten)]
    pub common: TrainCommon,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "adapt")]
    pub role: RoleArg,
    /// Number of leading MP blocks that receive FiLM.
    #[arg(long, default_value_t = 1)]
    pub film_blocks: usize,
    #[arg(long, value_enum)]
    pub param_family: FamilyArg,
    /// One generator pair shared by all hooked positions.
    #[arg(long)]
    pub shared: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct RolloutArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Predicted steps; defaults to the rest of the trajectory.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Normalized material value; defaults to the trajectory's material.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Output trajectory file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub role: RoleArg,
    /// Precomputed rollouts, one per test trajectory in manifest order;
    /// replaces --checkpoint.
    #[arg(long, num_args = 1..)]
    pub predictions: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct SensitivityArgs {
    #[arg(long, requires = "after")]
    pub before: Option<PathBuf>,
    #[arg(long)]
    pub after: Option<PathBuf>,
    /// Existing SensitivityReport JSON instead of two checkpoints.
    #[arg(long, conflicts_with_all = ["before", "after"])]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct InvertArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum)]
    pub param: FamilyArg,
    /// Search interval in raw units (degrees or kPa).
    #[arg(long, num_args = 2, required = true)]
    pub bounds: Vec<f64>,
    #[arg(long)]
    pub observed: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub n_init: usize,
    #[arg(long, default_value_t = 20)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct PcaArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Trajectory supplying the probe frames.
    #[arg(long)]
    pub probe: PathBuf,
    #[arg(long, default_value_t = 9)]
    pub n_kappa: usize,
    #[arg(long, default_value_t = 0.0)]
    pub kappa_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub kappa_max: f64,
    #[arg(long, default_value_t = 5)]
    pub probe_frames: usize,
    #[arg(long, default_value_t = 2)]
    pub components: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Generate(a) => commands::generate(a),
        Cmd::Pretrain(a) => commands::pretrain(a),
        Cmd::Finetune(a) => commands::finetune(a),
        Cmd::TrainFilm(a) => commands::train_film(a),
        Cmd::Rollout(a) => commands::rollout(a),
        Cmd::Eval(a) => commands::eval(a),
        Cmd::Sensitivity(a) => commands::sensitivity(a),
        Cmd::Invert(a) => commands::invert(a),
        Cmd::Pca(a) => commands::pca(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
