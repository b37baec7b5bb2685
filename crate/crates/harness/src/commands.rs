//! One function per subcommand. Each writes into `<out_dir>/<command>/`,
//! starting with a snapshot of the resolved configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use scenegrid_core::baselines::{colour_nn_pipeline, histogram_pipeline, LabelSource};
use scenegrid_core::geometry::{crop_corner, remove_class, Corner};
use scenegrid_core::metrics::{argmax, evaluate, rank_of, EvalReport};
use scenegrid_core::models::{Model, ModelConfig};
use scenegrid_core::scene_io::{generate_synthetic_dataset, DatasetManifest, SceneSample, Taxonomy};
use scenegrid_core::training::{
    load_checkpoint, log_csv, predict, predict_indexed, predict_prepared, save_checkpoint, LogRow, Pipeline, Trainer,
};
use scenegrid_core::error::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const CONFIG_SNAPSHOT: &str = "config.resolved.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum BaselineKind {
    ColourNn,
    RfOracle,
    RfPredicted,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::ColourNn => "colour-nn",
            BaselineKind::RfOracle => "rf-oracle",
            BaselineKind::RfPredicted => "rf-predicted",
        }
    }
}

/// Provenance and headline numbers written beside every report.
#[derive(Debug, Default, Serialize)]
struct RunRecord {
    command: String,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    near_miss_rate: Option<f64>,
}

impl RunRecord {
    fn with_report(mut self, r: &EvalReport) -> Self {
        self.scenes = Some(r.num_scenes);
        self.accuracy = Some(r.accuracy);
        self.mean_iou = Some(r.mean_iou);
        self.near_miss_rate = r.near_miss_rate;
        self
    }

    fn with_checkpoint(mut self, path: &Path) -> Result<Self> {
        self.checkpoint = Some(path.display().to_string());
        self.checkpoint_sha256 = Some(sha256_file(path)?);
        Ok(self)
    }

    fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| CliError::Invalid(e.to_string()))?;
        write_file(path, &text)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Creates `<out_dir>/<name>` and writes the config snapshot into it.
fn command_dir(cfg: &ExperimentConfig, name: &str) -> Result<PathBuf> {
    let dir = cfg.out_dir.join(name);
    create_dir(&dir)?;
    write_file(&dir.join(CONFIG_SNAPSHOT), &cfg.to_toml()?)?;
    Ok(dir)
}

pub fn default_checkpoint(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("train").join("model.ckpt")
}

fn load_manifest(cfg: &ExperimentConfig) -> Result<DatasetManifest> {
    let path = cfg.manifest_path();
    if !path.is_file() {
        return Err(CliError::Invalid(format!(
            "no dataset manifest at {}; run gen-data first",
            path.display()
        )));
    }
    Ok(DatasetManifest::load(&path)?)
}

fn check_taxonomy(model: &ModelConfig, tax: &Taxonomy) -> Result<()> {
    if model.num_scene_classes != tax.num_scene_classes() || model.num_object_classes != tax.num_object_classes() {
        return Err(CliError::Invalid(format!(
            "model expects {} scene / {} object classes, dataset has {} / {}",
            model.num_scene_classes,
            model.num_object_classes,
            tax.num_scene_classes(),
            tax.num_object_classes()
        )));
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn write_report(dir: &Path, prefix: &str, report: &EvalReport, tax: &Taxonomy) -> Result<()> {
    write_file(&dir.join(format!("{prefix}.csv")), &report.to_csv(tax))?;
    write_file(&dir.join(format!("{prefix}_confusion.csv")), &report.confusion_csv(tax))
}

pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<PathBuf> {
    command_dir(cfg, "gen-data")?;
    let m = generate_synthetic_dataset(&cfg.data.synth, &cfg.data.dir)?;
    let path = cfg.manifest_path();
    println!(
        "wrote {} train / {} val / {} test scenes; manifest {}",
        m.splits.train.len(),
        m.splits.val.len(),
        m.splits.test.len(),
        path.display()
    );
    Ok(path)
}

pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub log: Vec<LogRow>,
    pub report: EvalReport,
}

/// Trains `model` under `cfg.train` with `pipeline`, checkpointing into
/// `dir` after every epoch. With `resume`, continues from `dir/last.ckpt`.
fn train_into(
    cfg: &ExperimentConfig,
    model_cfg: &ModelConfig,
    pipeline: &Pipeline,
    manifest: &DatasetManifest,
    dir: &Path,
    resume: bool,
) -> Result<(Trainer, PathBuf)> {
    let tax = &manifest.taxonomy;
    check_taxonomy(model_cfg, tax)?;
    let train = manifest.load_split("train")?;
    let val = manifest.load_split("val")?;
    let last = dir.join("last.ckpt");
    let mut trainer = if resume && last.is_file() {
        let ck = load_checkpoint(&last)?;
        if ck.model != *model_cfg || ck.train != cfg.train {
            return Err(CliError::Invalid(format!(
                "{} was written under a different configuration",
                last.display()
            )));
        }
        ck.trainer()?
    } else {
        Trainer::new(Model::new(model_cfg.clone(), cfg.train.seed)?, cfg.train.clone())?
    };
    let log_path = dir.join("train_log.csv");
    trainer.run(pipeline, &train, &val, tax, None, |t, row| {
        println!(
            "{} epoch {}: loss {:.4} val_acc {}",
            row.phase.name(),
            row.epoch,
            row.loss,
            fmt_opt(row.val_acc)
        );
        save_checkpoint(t, &last)?;
        std::fs::write(&log_path, log_csv(&t.log)).map_err(|e| Error::Io {
            path: log_path.clone(),
            source: e,
        })
    })?;
    let final_path = dir.join("model.ckpt");
    save_checkpoint(&trainer, &final_path)?;
    write_file(&log_path, &log_csv(&trainer.log))?;
    Ok((trainer, final_path))
}

pub fn cmd_train(cfg: &ExperimentConfig, resume: bool) -> Result<TrainOutcome> {
    let dir = command_dir(cfg, "train")?;
    let manifest = load_manifest(cfg)?;
    let pipeline = Pipeline::for_model(&cfg.model, None, cfg.augment_config());
    let (trainer, checkpoint) = train_into(cfg, &cfg.model, &pipeline, &manifest, &dir, resume)?;
    let samples = manifest.load_split(&cfg.eval_split)?;
    let scores = predict(&trainer.model, &pipeline, &samples, cfg.train.batch_size, cfg.train.seed)?;
    let truths: Vec<usize> = samples.iter().map(|s| s.scene_label).collect();
    let report = evaluate(&scores, &truths, &manifest.taxonomy)?;
    write_report(&dir, "eval", &report, &manifest.taxonomy)?;
    RunRecord {
        command: "train".into(),
        seed: cfg.seed,
        ..Default::default()
    }
    .with_checkpoint(&checkpoint)?
    .with_report(&report)
    .write(&dir.join("run.toml"))?;
    println!(
        "{} accuracy {:.4} mIoU {:.4}; checkpoint {}",
        cfg.eval_split,
        report.accuracy,
        report.mean_iou,
        checkpoint.display()
    );
    Ok(TrainOutcome {
        checkpoint,
        log: trainer.log,
        report,
    })
}

struct Loaded {
    model: Model<f32>,
    batch_size: usize,
    seed: u64,
    path: PathBuf,
}

fn load_model(path: &Path, tax: &Taxonomy) -> Result<Loaded> {
    if !path.is_file() {
        return Err(CliError::Invalid(format!("checkpoint {} not found", path.display())));
    }
    let ck = load_checkpoint(path)?;
    check_taxonomy(&ck.model, tax)?;
    Ok(Loaded {
        model: ck.model()?,
        batch_size: ck.train.batch_size,
        seed: ck.train.seed,
        path: path.to_path_buf(),
    })
}

pub struct EvalOutcome {
    pub report: EvalReport,
    pub scores: Vec<Vec<f64>>,
}

fn scores_csv(samples: &[SceneSample], scores: &[Vec<f64>], tax: &Taxonomy) -> String {
    let mut s = String::from("scene_id,truth,pred,true_rank");
    for c in &tax.scene_classes {
        let _ = write!(s, ",{c}");
    }
    s.push('\n');
    for (sample, sc) in samples.iter().zip(scores) {
        let _ = write!(
            s,
            "{},{},{},{}",
            sample.scene_id,
            tax.scene_classes[sample.scene_label],
            tax.scene_classes[argmax(sc)],
            rank_of(sc, sample.scene_label)
        );
        for v in sc {
            let _ = write!(s, ",{v:.6}");
        }
        s.push('\n');
    }
    s
}

/// Misclassified scenes with their three best classes.
fn near_miss_listing(samples: &[SceneSample], scores: &[Vec<f64>], tax: &Taxonomy) -> String {
    let mut s = String::new();
    for (sample, sc) in samples.iter().zip(scores) {
        let pred = argmax(sc);
        if pred == sample.scene_label {
            continue;
        }
        let rank = rank_of(sc, sample.scene_label);
        let mut order: Vec<usize> = (0..sc.len()).collect();
        order.sort_by(|&a, &b| sc[b].total_cmp(&sc[a]).then(a.cmp(&b)));
        let top: Vec<String> = order
            .iter()
            .take(3)
            .map(|&c| format!("{} {:.3}", tax.scene_classes[c], sc[c]))
            .collect();
        let _ = writeln!(
            s,
            "{}: true {} (rank {rank}){} | {}",
            sample.scene_id,
            tax.scene_classes[sample.scene_label],
            if rank == 2 { " near miss" } else { "" },
            top.join(", ")
        );
    }
    s
}

pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<EvalOutcome> {
    let dir = command_dir(cfg, "eval")?;
    let manifest = load_manifest(cfg)?;
    let tax = &manifest.taxonomy;
    let ck = checkpoint.map_or_else(|| default_checkpoint(cfg), Path::to_path_buf);
    let m = load_model(&ck, tax)?;
    let pipeline = Pipeline::for_model(&m.model.config, None, None);
    let samples = manifest.load_split(&cfg.eval_split)?;
    let scores = predict(&m.model, &pipeline, &samples, m.batch_size, m.seed)?;
    let truths: Vec<usize> = samples.iter().map(|s| s.scene_label).collect();
    let report = evaluate(&scores, &truths, tax)?;
    write_report(&dir, "eval", &report, tax)?;
    write_file(&dir.join("scores.csv"), &scores_csv(&samples, &scores, tax))?;
    write_file(&dir.join("near_misses.txt"), &near_miss_listing(&samples, &scores, tax))?;
    RunRecord {
        command: "eval".into(),
        seed: cfg.seed,
        ..Default::default()
    }
    .with_checkpoint(&m.path)?
    .with_report(&report)
    .write(&dir.join("run.toml"))?;
    println!(
        "{} accuracy {:.4} mIoU {:.4} near-miss rate {}",
        cfg.eval_split,
        report.accuracy,
        report.mean_iou,
        fmt_opt(report.near_miss_rate)
    );
    Ok(EvalOutcome { report, scores })
}

pub struct DensityRow {
    pub points: usize,
    pub report: EvalReport,
    pub fallback_scenes: usize,
}

/// Trains and evaluates one model per point count.
pub fn cmd_sweep_density(cfg: &ExperimentConfig, counts: &[usize]) -> Result<Vec<DensityRow>> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(CliError::Invalid("density counts must be non-empty and positive".into()));
    }
    let dir = command_dir(cfg, "sweep-density")?;
    let manifest = load_manifest(cfg)?;
    let tax = &manifest.taxonomy;
    let samples = manifest.load_split(&cfg.eval_split)?;
    let truths: Vec<usize> = samples.iter().map(|s| s.scene_label).collect();
    let mut rows = Vec::new();
    for &n in counts {
        let sub = dir.join(format!("points_{n}"));
        create_dir(&sub)?;
        let mut model_cfg = cfg.model.clone();
        model_cfg.num_points = n;
        let mut pipeline = Pipeline::for_model(&model_cfg, Some(n), cfg.augment_config());
        pipeline.sampler = cfg.sweep.density_sampler;
        println!("training with {n} points");
        let (trainer, _) = train_into(cfg, &model_cfg, &pipeline, &manifest, &sub, false)?;
        let refs: Vec<&SceneSample> = samples.iter().collect();
        let prepared = pipeline.prepare_all(
            &refs,
            false,
            scenegrid_core::seed::derive(cfg.train.seed, "eval"),
        )?;
        let fallback_scenes = prepared.iter().filter(|p| p.fallback).count();
        let scores = predict_prepared(&trainer.model, &pipeline, &prepared, cfg.train.batch_size)?;
        let report = evaluate(&scores, &truths, tax)?;
        write_report(&sub, "eval", &report, tax)?;
        rows.push(DensityRow {
            points: n,
            report,
            fallback_scenes,
        });
    }
    let mut csv = String::from("points,acc,miou,fallback_scenes\n");
    let mut recall = String::from("points");
    for c in &tax.scene_classes {
        let _ = write!(recall, ",{c}");
    }
    recall.push('\n');
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{:.6},{:.6},{}",
            r.points, r.report.accuracy, r.report.mean_iou, r.fallback_scenes
        );
        let _ = write!(recall, "{}", r.points);
        for v in &r.report.per_class_recall {
            let _ = write!(recall, ",{}", fmt_opt(*v));
        }
        recall.push('\n');
    }
    write_file(&dir.join("density.csv"), &csv)?;
    write_file(&dir.join("density_recall.csv"), &recall)?;
    let mut sorted: Vec<&DensityRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.points);
    let monotone = sorted.windows(2).all(|w| w[1].report.accuracy >= w[0].report.accuracy);
    for r in &rows {
        println!(
            "{} points: accuracy {:.4} mIoU {:.4}{}",
            r.points,
            r.report.accuracy,
            r.report.mean_iou,
            if r.fallback_scenes > 0 {
                format!(" ({} scenes kept whole)", r.fallback_scenes)
            } else {
                String::new()
            }
        );
    }
    println!(
        "accuracy {} non-decreasing in the point count",
        if monotone { "is" } else { "is not" }
    );
    Ok(rows)
}

pub struct CropRow {
    pub ratio: f64,
    pub report: EvalReport,
    pub skipped: usize,
}

pub struct CropSweep {
    pub uncropped: EvalReport,
    pub rows: Vec<CropRow>,
}

/// Test-time crops at every corner; scores of the four corners are pooled.
pub fn cmd_sweep_crop(cfg: &ExperimentConfig, checkpoint: Option<&Path>, ratios: &[f64]) -> Result<CropSweep> {
    if ratios.is_empty() || ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(CliError::Invalid("crop ratios must be non-empty and lie in (0, 1]".into()));
    }
    let dir = command_dir(cfg, "sweep-crop")?;
    let manifest = load_manifest(cfg)?;
    let tax = &manifest.taxonomy;
    let ck = checkpoint.map_or_else(|| default_checkpoint(cfg), Path::to_path_buf);
    let m = load_model(&ck, tax)?;
    let pipeline = Pipeline::for_model(&m.model.config, None, None);
    let samples = manifest.load_split(&cfg.eval_split)?;
    let truths: Vec<usize> = samples.iter().map(|s| s.scene_label).collect();
    let uncropped = evaluate(&predict(&m.model, &pipeline, &samples, m.batch_size, m.seed)?, &truths, tax)?;
    let mut rows = Vec::new();
    for &ratio in ratios {
        let (mut scores, mut tr, mut skipped) = (Vec::new(), Vec::new(), 0);
        for corner in Corner::ALL {
            let mut kept = Vec::new();
            for (i, s) in samples.iter().enumerate() {
                match crop_corner(&s.cloud, ratio, corner) {
                    Ok(cloud) => kept.push((
                        i,
                        SceneSample {
                            cloud,
                            ..s.clone()
                        },
                    )),
                    Err(Error::Empty(_)) => skipped += 1,
                    Err(e) => return Err(e.into()),
                }
            }
            let refs: Vec<(usize, &SceneSample)> = kept.iter().map(|(i, s)| (*i, s)).collect();
            scores.extend(predict_indexed(&m.model, &pipeline, &refs, m.batch_size, m.seed)?);
            tr.extend(kept.iter().map(|(_, s)| s.scene_label));
        }
        if tr.is_empty() {
            return Err(CliError::Invalid(format!("crop ratio {ratio} empties every scene")));
        }
        let report = evaluate(&scores, &tr, tax)?;
        if skipped > 0 {
            println!("ratio {ratio}: skipped {skipped} empty crops");
        }
        rows.push(CropRow { ratio, report, skipped });
    }
    let mut csv = String::from("ratio,acc,miou,skipped\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{:.3},{:.6},{:.6},{}",
            r.ratio, r.report.accuracy, r.report.mean_iou, r.skipped
        );
        println!("ratio {:.2}: accuracy {:.4} mIoU {:.4}", r.ratio, r.report.accuracy, r.report.mean_iou);
    }
    write_file(&dir.join("crop.csv"), &csv)?;
    write_report(&dir, "uncropped", &uncropped, tax)?;
    RunRecord {
        command: "sweep-crop".into(),
        seed: cfg.seed,
        ..Default::default()
    }
    .with_checkpoint(&m.path)?
    .with_report(&uncropped)
    .write(&dir.join("run.toml"))?;
    Ok(CropSweep { uncropped, rows })
}

pub struct AblationRow {
    pub object_class: String,
    pub skipped: usize,
    /// `recall_after - recall_before` per scene class.
    pub delta: Vec<Option<f64>>,
}

pub struct Ablation {
    pub baseline_recall: Vec<Option<f64>>,
    pub rows: Vec<AblationRow>,
}

/// Removes each object class from the test scenes in turn and records the
/// change in per-scene-class recall; the model is not retrained.
pub fn cmd_ablate_class(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<Ablation> {
    let dir = command_dir(cfg, "ablate-class")?;
    let manifest = load_manifest(cfg)?;
    let tax = &manifest.taxonomy;
    let classes: Vec<u16> = if cfg.sweep.ablate_classes.is_empty() {
        (0..tax.num_object_classes() as u16).collect()
    } else {
        cfg.sweep
            .ablate_classes
            .iter()
            .map(|n| {
                tax.object_id(n)
                    .ok_or_else(|| CliError::Invalid(format!("unknown object class {n}")))
            })
            .collect::<Result<_>>()?
    };
    let ck = checkpoint.map_or_else(|| default_checkpoint(cfg), Path::to_path_buf);
    let m = load_model(&ck, tax)?;
    let pipeline = Pipeline::for_model(&m.model.config, None, None);
    let samples = manifest.load_split(&cfg.eval_split)?;
    let truths: Vec<usize> = samples.iter().map(|s| s.scene_label).collect();
    let before = evaluate(&predict(&m.model, &pipeline, &samples, m.batch_size, m.seed)?, &truths, tax)?;
    let mut rows = Vec::new();
    for k in classes {
        let mut kept = Vec::new();
        let mut skipped = 0;
        for (i, s) in samples.iter().enumerate() {
            match remove_class(&s.cloud, k) {
                Ok(cloud) => kept.push((
                    i,
                    SceneSample {
                        cloud,
                        ..s.clone()
                    },
                )),
                Err(Error::Empty(_)) => skipped += 1,
                Err(e) => return Err(e.into()),
            }
        }
        let after = if kept.is_empty() {
            vec![None; tax.num_scene_classes()]
        } else {
            let refs: Vec<(usize, &SceneSample)> = kept.iter().map(|(i, s)| (*i, s)).collect();
            let scores = predict_indexed(&m.model, &pipeline, &refs, m.batch_size, m.seed)?;
            let tr: Vec<usize> = kept.iter().map(|(_, s)| s.scene_label).collect();
            evaluate(&scores, &tr, tax)?.per_class_recall
        };
        let delta = after
            .iter()
            .zip(&before.per_class_recall)
            .map(|(a, b)| Some(a.as_ref()? - b.as_ref()?))
            .collect();
        rows.push(AblationRow {
            object_class: tax.object_classes[k as usize].clone(),
            skipped,
            delta,
        });
    }
    let mut csv = String::from("removed_class,skipped");
    for c in &tax.scene_classes {
        let _ = write!(csv, ",{c}");
    }
    csv.push('\n');
    for r in &rows {
        let _ = write!(csv, "{},{}", r.object_class, r.skipped);
        for d in &r.delta {
            let _ = write!(csv, ",{}", fmt_opt(*d));
        }
        csv.push('\n');
        if r.skipped > 0 {
            println!("removing {}: skipped {} emptied scenes", r.object_class, r.skipped);
        }
    }
    write_file(&dir.join("ablation.csv"), &csv)?;
    write_report(&dir, "baseline", &before, tax)?;
    RunRecord {
        command: "ablate-class".into(),
        seed: cfg.seed,
        ..Default::default()
    }
    .with_checkpoint(&m.path)?
    .with_report(&before)
    .write(&dir.join("run.toml"))?;
    println!("wrote {}", dir.join("ablation.csv").display());
    Ok(Ablation {
        baseline_recall: before.per_class_recall,
        rows,
    })
}

/// Runs one baseline: trained on the train split, evaluated on the eval
/// split. The predicted-label forest needs a checkpoint with a decoder.
pub fn cmd_baseline(cfg: &ExperimentConfig, which: BaselineKind, checkpoint: Option<&Path>) -> Result<EvalReport> {
    let dir = command_dir(cfg, "baseline")?;
    let manifest = load_manifest(cfg)?;
    let tax = &manifest.taxonomy;
    let train = manifest.load_split("train")?;
    let test = manifest.load_split(&cfg.eval_split)?;
    let name = which.name();
    let mut record = RunRecord {
        command: format!("baseline {name}"),
        seed: cfg.seed,
        ..Default::default()
    };
    let report = match which {
        BaselineKind::ColourNn => colour_nn_pipeline(&train, &test, cfg.baseline.distance, tax)?,
        BaselineKind::RfOracle | BaselineKind::RfPredicted => {
            let loaded;
            let pipeline;
            let source = if which == BaselineKind::RfOracle {
                LabelSource::Oracle
            } else {
                let ck = checkpoint.map_or_else(|| default_checkpoint(cfg), Path::to_path_buf);
                loaded = load_model(&ck, tax)?;
                if !loaded.model.has_decoder() {
                    return Err(CliError::Invalid(format!(
                        "{} has no segmentation decoder",
                        ck.display()
                    )));
                }
                pipeline = Pipeline::for_model(&loaded.model.config, None, None);
                record = record.with_checkpoint(&ck)?;
                LabelSource::Predicted {
                    model: &loaded.model,
                    pipeline: &pipeline,
                    seed: loaded.seed,
                }
            };
            let (report, forest) = histogram_pipeline(&train, &test, &source, &cfg.baseline.forest, tax)?;
            forest.save(&dir.join(format!("{name}_forest.json")))?;
            report
        }
    };
    write_report(&dir, name, &report, tax)?;
    record.with_report(&report).write(&dir.join(format!("{name}_run.toml")))?;
    println!("{name}: accuracy {:.4} mIoU {:.4}", report.accuracy, report.mean_iou);
    Ok(report)
}
