//! Losses, the Adam optimiser, learning-rate schedules, the three-phase
//! multi-task schedule and checkpoints.

mod adam;
mod checkpoint;
mod loss;
mod pipeline;
mod schedule;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, TensorEntry, MAGIC, VERSION,
};
pub use loss::{cosine_lr, cross_entropy, multi_task_loss, weighted_loss, LossBreakdown};
pub use pipeline::{Pipeline, Prepared, PreparedScene, Sampler};
pub use schedule::{
    evaluate_model, log_csv, phases, predict, predict_indexed, predict_prepared, predict_voxel_labels, Batch, LogRow, Phase, PhaseKind,
    Progress, Scheduler, TrainConfig, Trainer, LOG_HEADER,
};
