use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use skillr1_core::{EnvKind, Mode};

#[derive(Parser, Debug)]
#[command(
    name = "skillr1",
    version,
    about = "Recurrent skill evolution trained with bi-level group-relative policy optimization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the skill generator in the synthetic environment.
    Train(TrainArgs),
    /// Evaluate a frozen skill generator and write the per-generation table.
    Eval(EvalArgs),
    /// Compare generation tables of two or more runs.
    Compare(CompareArgs),
}

/// Values that override the config file.
#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// train, inference or vanilla-grpo.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// synthetic or llm.
    #[arg(long = "env")]
    pub env: Option<EnvKind>,
    /// Generations G per episode.
    #[arg(long)]
    pub generations: Option<u32>,
    /// Rollouts K per generation.
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Weight of the across-generation advantage.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Discount over generations.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Clip width of the importance ratio.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// KL penalty weight.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Episodes per ascent step.
    #[arg(long)]
    pub episodes_per_update: Option<usize>,
    #[arg(skip)]
    pub updates: Option<usize>,
    #[arg(skip)]
    pub eval_repeats: Option<usize>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Config file (TOML with [train], [synthetic], [llm] and [retry] sections).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
    /// Worker threads for concurrent episodes; results do not depend on it.
    #[arg(long, default_value_t = default_jobs())]
    pub jobs: usize,
    #[command(flatten)]
    pub overrides: Overrides,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of ascent steps.
    #[arg(long)]
    pub updates: Option<usize>,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("editor").args(["params", "frozen_random"])))]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Policy parameters written by `train`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Use the seeded random initialization as a frozen editor.
    #[arg(long)]
    pub frozen_random: bool,
    /// Episodes per instance.
    #[arg(long)]
    pub eval_repeats: Option<usize>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Run directories (containing generations.csv) or table files; the first is the baseline of every delta.
    #[arg(required = true, num_args = 2..)]
    pub runs: Vec<PathBuf>,
    /// Comma-separated labels, one per run.
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
}
