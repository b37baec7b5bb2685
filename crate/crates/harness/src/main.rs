use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scenegrid::{
    cmd_ablate_class, cmd_baseline, cmd_eval, cmd_gen_data, cmd_sweep_crop, cmd_sweep_density, cmd_train,
    BaselineKind, CliError, ExperimentConfig, Result,
};
use scenegrid_core::models::Variant;

#[derive(Parser)]
#[command(name = "scenegrid", version, about = "3D indoor scene recognition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Global seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset and its manifest.
    GenData,
    /// Train a model and evaluate it on the eval split.
    Train {
        /// Model variant, overriding the config.
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Train on coordinates only.
        #[arg(long)]
        no_colour: bool,
        /// Continue from the last per-epoch checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint: report, confusion matrix, scores and near misses.
    Eval {
        /// Checkpoint to evaluate; defaults to the one written by train.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and test one model per input point count.
    SweepDensity {
        /// Comma-separated point counts, overriding the config.
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
        /// Model variant, overriding the config.
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Train on coordinates only.
        #[arg(long)]
        no_colour: bool,
    },
    /// Evaluate a checkpoint on corner crops of the test scenes.
    SweepCrop {
        /// Checkpoint to evaluate; defaults to the one written by train.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated crop ratios, overriding the config.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
    },
    /// Evaluate a checkpoint with one object class removed at a time.
    AblateClass {
        /// Checkpoint to evaluate; defaults to the one written by train.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run a geometry-free baseline.
    Baseline {
        /// Which baseline to run.
        #[arg(long, value_enum)]
        which: BaselineKind,
        /// Segmentation model for rf-predicted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum VariantArg {
    Resnet14,
    Resnet14Multitask,
    Pointnet,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Resnet14 => Variant::Resnet14,
            VariantArg::Resnet14Multitask => Variant::Resnet14Multitask,
            VariantArg::Pointnet => Variant::Pointnet,
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("SCENEGRID_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Invalid(format!("SCENEGRID_THREADS={v} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Invalid(e.to_string()))
}

fn apply_model_flags(cfg: &mut ExperimentConfig, variant: Option<VariantArg>, no_colour: bool) {
    if let Some(v) = variant {
        cfg.model.variant = v.into();
    }
    if no_colour {
        cfg.model.colour = false;
    }
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    match &cli.command {
        Command::Train { variant, no_colour, .. } | Command::SweepDensity { variant, no_colour, .. } => {
            apply_model_flags(&mut cfg, *variant, *no_colour)
        }
        _ => {}
    }
    let cfg = cfg.resolve(cli.seed, cli.out)?;
    match cli.command {
        Command::GenData => cmd_gen_data(&cfg).map(drop),
        Command::Train { resume, .. } => cmd_train(&cfg, resume).map(drop),
        Command::Eval { checkpoint } => cmd_eval(&cfg, checkpoint.as_deref()).map(drop),
        Command::SweepDensity { counts, .. } => {
            let counts = counts.unwrap_or_else(|| cfg.sweep.density_counts.clone());
            cmd_sweep_density(&cfg, &counts).map(drop)
        }
        Command::SweepCrop { checkpoint, ratios } => {
            let ratios = ratios.unwrap_or_else(|| cfg.sweep.crop_ratios.clone());
            cmd_sweep_crop(&cfg, checkpoint.as_deref(), &ratios).map(drop)
        }
        Command::AblateClass { checkpoint } => cmd_ablate_class(&cfg, checkpoint.as_deref()).map(drop),
        Command::Baseline { which, checkpoint } => cmd_baseline(&cfg, which, checkpoint.as_deref()).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
