mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "viewfill", version, about = "Reference-driven image completion guided by multi-view geometry")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML config file with optional [scene], [train], [infer] and [robust] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene directory.
    Gen(GenArgs),
    /// Render the cloud projections and informative masks of a scene.
    Project(SceneOut),
    /// Write a few training samples as PNGs.
    MaskDebug(MaskDebugArgs),
    /// Train a denoiser on one scene.
    Train(TrainArgs),
    /// Complete the target of a scene with a trained checkpoint.
    Infer(InferArgs),
    /// Compare an image with the scene's ground-truth target.
    Eval(EvalArgs),
    /// Perturbation sweep over levels and seeds.
    Robust(RobustArgs),
}

#[derive(Debug, Args)]
struct SceneOut {
    #[arg(long)]
    scene: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Named scene configuration; overrides the config file's [scene].
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MaskDebugArgs {
    #[command(flatten)]
    io: SceneOut,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    count: usize,
    /// Ablation variant whose masking settings are used.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    io: SceneOut,
    /// Overrides train.seed and the model's init seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides train.iterations.
    #[arg(long)]
    steps: Option<usize>,
    /// no-cloud-branch, no-cm-jsa, no-tam or full.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Debug, Args)]
struct SamplerArgs {
    /// Overrides infer.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Sampler steps; overrides infer.steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, overrides_with = "no_composite")]
    composite: bool,
    #[arg(long, overrides_with = "composite")]
    no_composite: bool,
}

impl SamplerArgs {
    fn composite(&self) -> Option<bool> {
        if self.composite {
            Some(true)
        } else if self.no_composite {
            Some(false)
        } else {
            None
        }
    }
}

#[derive(Debug, Args)]
struct InferArgs {
    #[command(flatten)]
    io: SceneOut,
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Image to score.
    #[arg(long)]
    image: PathBuf,
    /// Also write eval.csv here.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Seed recorded in the report.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct RobustArgs {
    #[command(flatten)]
    io: SceneOut,
    /// Comma-separated perturbation levels in [0, 1].
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// noise, sparse, mask-error or mask-removal.
    #[arg(long)]
    kind: Option<String>,
    /// Reuse this checkpoint instead of retraining per cell.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Sampler steps; overrides infer.steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    variant: Option<String>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<viewfill::Error>() {
            return e.exit_code() as u8;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let category = match code {
                1 => "i/o",
                3 => "numeric",
                _ => "config",
            };
            eprintln!("error [{category}]: {e:#}");
            ExitCode::from(code)
        }
    }
}
