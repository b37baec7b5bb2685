use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{cosine_lr, weighted_loss, LossBreakdown};
use super::pipeline::{Pipeline, Prepared, PreparedScene};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::models::{ForwardMode, Group, Input, Model, Variant};
use crate::nn::Tape;
use crate::scene_io::{SceneSample, Taxonomy};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    None,
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate of the end-to-end fine-tuning phase.
    pub finetune_lr: f64,
    /// Floor of the cosine schedule.
    pub min_lr: f64,
    pub scheduler: Scheduler,
    /// Epochs of single-task training.
    pub epochs: usize,
    /// Epochs of the segmentation, classification and fine-tuning phases.
    pub phase_epochs: [usize; 3],
    /// Classification weight during fine-tuning.
    pub finetune_alpha: f64,
    pub freeze_decoder_in_finetune: bool,
    pub bn_momentum: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            lr: 1e-3,
            finetune_lr: 1e-4,
            min_lr: 0.0,
            scheduler: Scheduler::Cosine,
            epochs: 30,
            phase_epochs: [30, 10, 10],
            finetune_alpha: 0.5,
            freeze_decoder_in_finetune: false,
            bn_momentum: 0.1,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr > 0.0 && self.finetune_lr > 0.0 && self.min_lr >= 0.0) {
            return bad("learning rates must be positive (min_lr non-negative)");
        }
        if !(0.0..=1.0).contains(&self.finetune_alpha) {
            return bad("finetune_alpha must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return bad("bn_momentum must lie in [0, 1]");
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    /// Classification only, everything trainable.
    Single,
    /// Segmentation only; encoder and decoder train.
    Segmentation,
    /// Frozen encoder, head trained on detached latents.
    Classification,
    /// Both losses, end to end.
    Finetune,
}

impl PhaseKind {
    pub fn name(self) -> &'static str {
        match self {
            PhaseKind::Single => "single",
            PhaseKind::Segmentation => "segmentation",
            PhaseKind::Classification => "classification",
            PhaseKind::Finetune => "finetune",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phase {
    pub kind: PhaseKind,
    pub epochs: usize,
    pub lr: f64,
    pub alpha: f64,
    pub groups: Vec<Group>,
    pub mode: ForwardMode,
}

/// The phases a model variant trains through.
pub fn phases(variant: Variant, cfg: &TrainConfig) -> Vec<Phase> {
    if variant != Variant::Resnet14Multitask {
        return vec![Phase {
            kind: PhaseKind::Single,
            epochs: cfg.epochs,
            lr: cfg.lr,
            alpha: 1.0,
            groups: vec![Group::Encoder, Group::Head],
            mode: ForwardMode::train(),
        }];
    }
    let [seg, cls, fine] = cfg.phase_epochs;
    let mut fine_groups = vec![Group::Encoder, Group::Head];
    if !cfg.freeze_decoder_in_finetune {
        fine_groups.push(Group::Decoder);
    }
    vec![
        Phase {
            kind: PhaseKind::Segmentation,
            epochs: seg,
            lr: cfg.lr,
            alpha: 0.0,
            groups: vec![Group::Encoder, Group::Decoder],
            mode: ForwardMode {
                train: true,
                classify: false,
                segment: true,
                detach_latent: false,
            },
        },
        Phase {
            kind: PhaseKind::Classification,
            epochs: cls,
            lr: cfg.lr,
            alpha: 1.0,
            groups: vec![Group::Head],
            mode: ForwardMode {
                train: false,
                classify: true,
                segment: false,
                detach_latent: true,
            },
        },
        Phase {
            kind: PhaseKind::Finetune,
            epochs: fine,
            lr: cfg.finetune_lr,
            alpha: cfg.finetune_alpha,
            groups: fine_groups,
            mode: ForwardMode {
                train: true,
                classify: true,
                segment: true,
                detach_latent: false,
            },
        },
    ]
}

/// One CSV row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub phase: PhaseKind,
    pub epoch: usize,
    pub lr: f64,
    pub alpha: f64,
    pub l_cls: Option<f64>,
    pub l_sem: Option<f64>,
    pub loss: f64,
    pub val_acc: Option<f64>,
    pub val_miou: Option<f64>,
}

pub const LOG_HEADER: &str = "phase,epoch,lr,alpha,L_cls,L_sem,L,val_acc,val_miou";

pub fn log_csv(rows: &[LogRow]) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut s = format!("{LOG_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.8},{},{},{},{:.6},{},{}",
            r.phase.name(),
            r.epoch,
            r.lr,
            r.alpha,
            f(r.l_cls),
            f(r.l_sem),
            r.loss,
            f(r.val_acc),
            f(r.val_miou)
        );
    }
    s
}

/// Position within the schedule: `epoch` epochs of phase `phase` are done.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Progress {
    pub phase: usize,
    pub epoch: usize,
}

/// Everything needed to continue training: model, optimiser state, position
/// and log so far.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model<f32>,
    pub adam: AdamState<f32>,
    pub cfg: TrainConfig,
    pub progress: Progress,
    pub log: Vec<LogRow>,
}

/// Labelled inputs of one batch.
pub struct Batch {
    pub input: Prepared<f32>,
    pub scene_labels: Vec<usize>,
}

impl Batch {
    pub fn new(pipeline: &Pipeline, scenes: &[&PreparedScene], labels: Vec<usize>, levels: usize) -> Result<Self> {
        Ok(Self {
            input: pipeline.batch(scenes, levels)?,
            scene_labels: labels,
        })
    }
}

impl Trainer {
    pub fn new(model: Model<f32>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = AdamState::new(&model.params);
        Ok(Self {
            model,
            adam,
            cfg,
            progress: Progress::default(),
            log: Vec::new(),
        })
    }

    pub fn phases(&self) -> Vec<Phase> {
        phases(self.model.config.variant, &self.cfg)
    }

    pub fn is_finished(&self) -> bool {
        self.progress.phase >= self.phases().len()
    }

    /// One optimisation step on `batch`.
    pub fn step(&mut self, batch: &Batch, phase: &Phase, lr: f64) -> Result<LossBreakdown> {
        let (breakdown, grads, stats) = {
            let mut tape = Tape::new(&self.model.params);
            let input = match &batch.input {
                Prepared::Voxels(v) => Input::Voxels(v),
                Prepared::Points(p) => Input::Points(p),
            };
            let out = self.model.forward(&mut tape, input, phase.mode)?;
            let cls = match out.scores {
                Some(s) => {
                    let t: Vec<Option<usize>> = batch.scene_labels.iter().map(|&l| Some(l)).collect();
                    Some(tape.cross_entropy(s, &t)?)
                }
                None => None,
            };
            let sem = match (out.point_logits, &batch.input) {
                (Some(p), Prepared::Voxels(v)) => {
                    let labels = v
                        .voxel_labels
                        .as_ref()
                        .ok_or_else(|| Error::Missing("segmentation loss needs per-point object labels".into()))?;
                    Some(tape.cross_entropy(p, labels)?)
                }
                _ => None,
            };
            let total = weighted_loss(&mut tape, cls, sem, phase.alpha)?;
            let value = |v: Option<crate::nn::Var>| v.map(|v| tape.value(v).get(0, 0) as f64);
            let breakdown = LossBreakdown {
                l_cls: value(cls),
                l_sem: value(sem),
                alpha: phase.alpha,
                total: tape.value(total).get(0, 0) as f64,
            };
            let grads = tape.backward(total)?;
            (breakdown, grads, tape.stats_updates().to_vec())
        };
        self.model.params.apply_running_stats(&stats, self.cfg.bn_momentum);
        let model = &self.model;
        let groups = &phase.groups;
        let active: Vec<bool> = model.params.ids().map(|id| groups.contains(&model.group(id))).collect();
        adam_step(
            &mut self.model.params,
            &grads,
            &mut self.adam,
            &self.cfg.adam,
            lr,
            |id| active[id.index()],
        )?;
        Ok(breakdown)
    }

    /// Trains one epoch of the current phase and validates.
    pub fn run_epoch(
        &mut self,
        pipeline: &Pipeline,
        train: &[SceneSample],
        val: &[SceneSample],
        taxonomy: &Taxonomy,
    ) -> Result<LogRow> {
        let phases = self.phases();
        let Some(phase) = phases.get(self.progress.phase).cloned() else {
            return Err(Error::invalid("training schedule already finished"));
        };
        if train.is_empty() {
            return Err(Error::Empty("no training scenes".into()));
        }
        let epoch = self.progress.epoch;
        let tag = format!("train/p{}", self.progress.phase);
        let epoch_seed = seed::derive_indexed(self.cfg.seed, &tag, epoch as u64);
        let refs: Vec<&SceneSample> = train.iter().collect();
        let prepared = pipeline.prepare_all(&refs, true, seed::derive(epoch_seed, "prepare"))?;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive(epoch_seed, "shuffle")));

        let bs = self.cfg.batch_size;
        let steps_per_epoch = order.len().div_ceil(bs);
        let total_steps = steps_per_epoch * phase.epochs.max(1);
        let levels = self.model.levels();
        let (mut sum_cls, mut sum_sem, mut sum_total, mut n_seen) = (0.0, 0.0, 0.0, 0usize);
        let mut lr_first = None;
        for (k, chunk) in order.chunks(bs).enumerate() {
            let lr = match self.cfg.scheduler {
                Scheduler::None => phase.lr,
                Scheduler::Cosine => cosine_lr(epoch * steps_per_epoch + k, total_steps, phase.lr, self.cfg.min_lr)?,
            };
            lr_first.get_or_insert(lr);
            let scenes: Vec<&PreparedScene> = chunk.iter().map(|&i| &prepared[i]).collect();
            let labels = chunk.iter().map(|&i| train[i].scene_label).collect();
            let batch = Batch::new(pipeline, &scenes, labels, levels)?;
            let b = self.step(&batch, &phase, lr)?;
            let w = chunk.len() as f64;
            sum_cls += b.l_cls.unwrap_or(0.0) * w;
            sum_sem += b.l_sem.unwrap_or(0.0) * w;
            sum_total += b.total * w;
            n_seen += chunk.len();
        }
        let n = n_seen as f64;
        let report = if val.is_empty() {
            None
        } else {
            Some(evaluate_model(&self.model, pipeline, val, taxonomy, self.cfg.batch_size, self.cfg.seed)?)
        };
        let row = LogRow {
            phase: phase.kind,
            epoch: epoch + 1,
            lr: lr_first.unwrap_or(phase.lr),
            alpha: phase.alpha,
            l_cls: phase.mode.classify.then_some(sum_cls / n),
            l_sem: phase.mode.segment.then_some(sum_sem / n),
            loss: sum_total / n,
            val_acc: report.as_ref().map(|r| r.accuracy),
            val_miou: report.as_ref().map(|r| r.mean_iou),
        };
        self.log.push(row.clone());
        self.progress.epoch += 1;
        if self.progress.epoch >= phase.epochs {
            self.advance_phase();
        }
        Ok(row)
    }

    fn advance_phase(&mut self) {
        self.progress = Progress {
            phase: self.progress.phase + 1,
            epoch: 0,
        };
        self.adam = AdamState::new(&self.model.params);
        self.skip_empty_phases();
    }

    fn skip_empty_phases(&mut self) {
        let phases = self.phases();
        while phases.get(self.progress.phase).is_some_and(|p| p.epochs == 0) {
            self.progress.phase += 1;
        }
    }

    /// Runs epochs until the schedule finishes or `stop_at` is reached,
    /// calling `on_epoch` after each one.
    pub fn run(
        &mut self,
        pipeline: &Pipeline,
        train: &[SceneSample],
        val: &[SceneSample],
        taxonomy: &Taxonomy,
        stop_at: Option<Progress>,
        mut on_epoch: impl FnMut(&Trainer, &LogRow) -> Result<()>,
    ) -> Result<()> {
        if self.progress.epoch == 0 {
            self.skip_empty_phases();
        }
        while !self.is_finished() {
            if stop_at.is_some_and(|s| self.progress >= s) {
                break;
            }
            let row = self.run_epoch(pipeline, train, val, taxonomy)?;
            on_epoch(self, &row)?;
        }
        Ok(())
    }
}

/// Scene logits for every sample, in order, with the model in eval mode.
pub fn predict(
    model: &Model<f32>,
    pipeline: &Pipeline,
    samples: &[SceneSample],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let refs: Vec<&SceneSample> = samples.iter().collect();
    let prepared = pipeline.prepare_all(&refs, false, seed::derive(seed, "eval"))?;
    predict_prepared(model, pipeline, &prepared, batch_size)
}

/// Like [`predict`] for a subset of a split: each scene is preprocessed with
/// the seed of its position `index` in the full split, so a scene scores
/// exactly as it would inside the full evaluation.
pub fn predict_indexed(
    model: &Model<f32>,
    pipeline: &Pipeline,
    samples: &[(usize, &SceneSample)],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let base = seed::derive(seed, "eval");
    let prepared = samples
        .par_iter()
        .map(|&(i, s)| pipeline.prepare(s, false, seed::derive_indexed(base, "scene", i as u64)))
        .collect::<Result<Vec<_>>>()?;
    predict_prepared(model, pipeline, &prepared, batch_size)
}

pub fn predict_prepared(
    model: &Model<f32>,
    pipeline: &Pipeline,
    prepared: &[PreparedScene],
    batch_size: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut scores = Vec::with_capacity(prepared.len());
    let refs: Vec<&PreparedScene> = prepared.iter().collect();
    for chunk in refs.chunks(batch_size.max(1)) {
        let input = pipeline.batch::<f32>(chunk, model.levels())?;
        let mut tape = Tape::new(&model.params);
        let input_ref = match &input {
            Prepared::Voxels(v) => Input::Voxels(v),
            Prepared::Points(p) => Input::Points(p),
        };
        let out = model.forward(&mut tape, input_ref, ForwardMode::EVAL)?;
        let s = tape.value(out.scores.expect("eval mode classifies"));
        for r in 0..s.rows() {
            scores.push(s.row(r).iter().map(|&v| v as f64).collect());
        }
    }
    Ok(scores)
}

/// Per-voxel object predictions (argmax of decoder logits), one vector per
/// prepared voxel scene.
pub fn predict_voxel_labels(
    model: &Model<f32>,
    pipeline: &Pipeline,
    prepared: &[PreparedScene],
    batch_size: usize,
) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::with_capacity(prepared.len());
    let refs: Vec<&PreparedScene> = prepared.iter().collect();
    let mode = ForwardMode {
        classify: false,
        segment: true,
        ..ForwardMode::EVAL
    };
    for chunk in refs.chunks(batch_size.max(1)) {
        let Prepared::Voxels(batch) = pipeline.batch::<f32>(chunk, model.levels())? else {
            return Err(Error::invalid("segmentation needs a voxel model"));
        };
        let mut tape = Tape::new(&model.params);
        let o = model.forward(&mut tape, Input::Voxels(&batch), mode)?;
        let logits = tape.value(o.point_logits.expect("segment mode")).argmax_rows();
        for r in &batch.rows {
            out.push(logits[r.clone()].to_vec());
        }
    }
    Ok(out)
}

pub fn evaluate_model(
    model: &Model<f32>,
    pipeline: &Pipeline,
    samples: &[SceneSample],
    taxonomy: &Taxonomy,
    batch_size: usize,
    seed: u64,
) -> Result<EvalReport> {
    let scores = predict(model, pipeline, samples, batch_size, seed)?;
    let truths: Vec<usize> = samples.iter().map(|s| s.scene_label).collect();
    evaluate(&scores, &truths, taxonomy)
}
