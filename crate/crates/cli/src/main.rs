mod commands;
mod config;
mod viz;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use supergbd::superpixel::PATCH_PRESETS;
use supergbd::synthgen::ShapeFamily;

use config::{parse_pn_ratio, usage, CliResult};

/// Zero-shot RGB-D instance segmentation by learned superpixel merging.
#[derive(Parser, Debug)]
#[command(name = "supergbd", version, propagate_version = true)]
struct Cli {
    /// Worker threads for frame-level parallelism [default: available cores].
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// JSON settings file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic tabletop benchmark.
    Synth(SynthArgs),
    /// Split classes into seen / unseen groups and tag the dataset frames.
    Split(SplitArgs),
    /// Over-segment frames and write `<id>_spx.png` / `<id>_spx.json`.
    Preprocess(PreprocessArgs),
    /// Train the edge classifier.
    Train(TrainArgs),
    /// Segment frames with a trained checkpoint.
    Infer(InferArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Draw instance boundaries over the input images.
    Viz(VizArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of training frames.
    #[arg(long, default_value_t = 200)]
    train: usize,
    /// Number of test frames.
    #[arg(long, default_value_t = 50)]
    test: usize,
    /// Shape families of training and test frames.
    #[arg(long, value_delimiter = ',')]
    seen: Option<Vec<ShapeFamily>>,
    /// Shape families added to test frames only.
    #[arg(long, value_delimiter = ',')]
    unseen: Option<Vec<ShapeFamily>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    min_objects: Option<usize>,
    #[arg(long)]
    max_objects: Option<usize>,
    /// Render clean depth and color.
    #[arg(long)]
    no_noise: bool,
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// Dataset directory whose manifest receives the split.
    #[arg(long)]
    data: PathBuf,
    /// JSON map from group name to class names.
    #[arg(long)]
    groups: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the split on its own.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Only frames whose split or zero-shot tag equals this value.
    #[arg(long)]
    split: Option<String>,
}

#[derive(Args, Debug, Default)]
struct PipelineArgs {
    /// Target patch count per modality.
    #[arg(long, value_parser = parse_patches)]
    patches: Option<usize>,
    /// Directory with precomputed `<id>_spx.*` maps to reuse.
    #[arg(long, value_name = "DIR")]
    spx: Option<PathBuf>,
    /// Send the dominant supporting plane to background.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    suppress_plane: Option<bool>,
    /// Merge threshold on the edge probability.
    #[arg(long)]
    threshold: Option<f32>,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output directory [default: the dataset directory].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_patches)]
    patches: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Checkpoint path; the manifest and logs are written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Positive/negative share of every batch, e.g. 25/75 or 50/50.
    #[arg(long, value_parser = parse_pn_ratio, value_name = "P/N")]
    pn_ratio: Option<f64>,
    /// Comma-separated subset of rgb, xyz, normals, implicit.
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory for `<id>_pred.png` / `<id>_pred.json`.
    #[arg(long)]
    out: PathBuf,
    /// Feature groups; must match the checkpoint manifest when it exists.
    #[arg(long)]
    features: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AggregationArg {
    Pooled,
    PerImage,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Dataset directory.
    #[arg(long, required_unless_present = "from_report")]
    data: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    /// Directory with `<id>_pred.png` maps.
    #[arg(long, required_unless_present = "from_report")]
    pred: Option<PathBuf>,
    /// Report JSON path [default: <pred>/report.json]; a `.txt` table is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pooled")]
    aggregation: AggregationArg,
    /// Boundary matching radius in pixels [default: scaled with image height].
    #[arg(long)]
    radius: Option<usize>,
    /// Recompute the harmonic means of an existing report with seen / unseen rows.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["data", "pred"])]
    from_report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VizArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Directory with `<id>_pred.png` maps.
    #[arg(long)]
    pred: PathBuf,
    /// Output directory [default: the prediction directory].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Patch count of the per-modality panels.
    #[arg(long, value_parser = parse_patches)]
    patches: Option<usize>,
}

fn parse_patches(s: &str) -> Result<usize, String> {
    let k: usize = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if PATCH_PRESETS.contains(&k) {
        Ok(k)
    } else {
        Err(format!("patch count must be one of {PATCH_PRESETS:?}"))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = config::RunConfig::load(cli.config.as_deref())?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| usage(format!("cannot set up {jobs} workers: {e}")))?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(&cfg, a),
        Command::Split(a) => commands::split(&cfg, a),
        Command::Preprocess(a) => commands::preprocess(&cfg, a),
        Command::Train(a) => commands::train(&cfg, a),
        Command::Infer(a) => commands::infer(&cfg, a),
        Command::Eval(a) => commands::eval(&cfg, a),
        Command::Viz(a) => viz::run(&cfg, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
