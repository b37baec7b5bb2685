//! Experiment harness: dataset generation, training, evaluation, baselines
//! and the test-time sweeps, each writing CSV reports.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    cmd_ablate_class, cmd_baseline, cmd_eval, cmd_gen_data, cmd_sweep_crop, cmd_sweep_density, cmd_train,
    default_checkpoint, sha256_file, Ablation, AblationRow, BaselineKind, CropRow, CropSweep, DensityRow, EvalOutcome,
    TrainOutcome, CONFIG_SNAPSHOT,
};
pub use config::ExperimentConfig;
pub use error::{CliError, Result};
