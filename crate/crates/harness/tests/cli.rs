use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scenegrid::{
    cmd_ablate_class, cmd_baseline, cmd_eval, cmd_gen_data, cmd_sweep_crop, cmd_sweep_density, cmd_train,
    sha256_file, BaselineKind, ExperimentConfig, CONFIG_SNAPSHOT,
};
use scenegrid_core::models::Variant;

const TINY: &str = r#"
[data.synth]
scenes_per_class = 3
val_per_class = 1
points_per_scene = [200, 260]

[model]
widths = [4, 6, 8, 8]
head_hidden = 8
voxel_size = 0.25

[train]
batch_size = 8
epochs = 2
phase_epochs = [1, 1, 1]

[baseline.forest]
trees = 10
"#;

fn tiny(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(TINY).unwrap();
    cfg.out_dir = dir.join("out");
    cfg.data.dir = dir.join("data");
    cfg.resolve(Some(1), None).unwrap()
}

fn with_data(dir: &Path) -> ExperimentConfig {
    let cfg = tiny(dir);
    cmd_gen_data(&cfg).unwrap();
    cfg
}

fn scenegrid(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_scenegrid"));
    cmd.args(args);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(scenegrid(&["--help"], None).status.code(), Some(0));
    assert_eq!(scenegrid(&["frobnicate"], None).status.code(), Some(1));

    let bad = write_config(dir.path(), "seed = \"x\"\n");
    assert_eq!(scenegrid(&["gen-data"], Some(&bad)).status.code(), Some(1));

    let invalid = write_config(dir.path(), "[train]\nbatch_size = 0\n");
    assert_eq!(scenegrid(&["train"], Some(&invalid)).status.code(), Some(1));

    // no manifest yet
    let ok = write_config(dir.path(), TINY);
    let out = scenegrid(&["train"], Some(&ok));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gen-data"));

    let out = Command::new(env!("CARGO_BIN_EXE_scenegrid"))
        .args(["gen-data", "--config"])
        .arg(&ok)
        .env("SCENEGRID_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // a corrupt checkpoint is a runtime failure
    assert_eq!(scenegrid(&["gen-data"], Some(&ok)).status.code(), Some(0));
    let ck = dir.path().join("bad.ckpt");
    std::fs::write(&ck, b"S3DR\x01\x00\x00\x00garbage").unwrap();
    let out = scenegrid(&["eval", "--checkpoint", ck.to_str().unwrap()], Some(&ok));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_data_writes_manifest_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let manifest = cmd_gen_data(&cfg).unwrap();
    assert!(manifest.is_file());
    let m = scenegrid_core::scene_io::DatasetManifest::load(&manifest).unwrap();
    assert_eq!((m.splits.train.len(), m.splits.val.len()), (42, 21));
    let snap = std::fs::read_to_string(cfg.out_dir.join("gen-data").join(CONFIG_SNAPSHOT)).unwrap();
    assert_eq!(ExperimentConfig::from_toml(&snap).unwrap(), cfg);
}

#[test]
fn multitask_training_logs_both_losses_and_eval_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = with_data(dir.path());
    cfg.model.variant = Variant::Resnet14Multitask;
    let trained = cmd_train(&cfg, false).unwrap();
    let log = std::fs::read_to_string(cfg.out_dir.join("train").join("train_log.csv")).unwrap();
    let last = log.lines().last().unwrap();
    assert!(last.starts_with("finetune,1,"));
    let cols: Vec<&str> = last.split(',').collect();
    assert!(!cols[4].is_empty() && !cols[5].is_empty(), "{last}");

    let eval = cmd_eval(&cfg, None).unwrap();
    assert_eq!(eval.report, trained.report);
    let final_row = trained.log.last().unwrap();
    assert_eq!(final_row.val_acc, Some(eval.report.accuracy));
    assert_eq!(final_row.val_miou, Some(eval.report.mean_iou));

    let run = std::fs::read_to_string(cfg.out_dir.join("eval").join("run.toml")).unwrap();
    assert!(run.contains(&sha256_file(&trained.checkpoint).unwrap()));

    // the listing holds exactly the misclassified scenes
    let listing = std::fs::read_to_string(cfg.out_dir.join("eval").join("near_misses.txt")).unwrap();
    let errors = eval.report.num_scenes - eval.report.confusion.iter().enumerate().map(|(i, r)| r[i]).sum::<usize>();
    assert_eq!(listing.lines().count(), errors);
    let scores = std::fs::read_to_string(cfg.out_dir.join("eval").join("scores.csv")).unwrap();
    for line in scores.lines().skip(1) {
        let c: Vec<&str> = line.split(',').collect();
        assert_eq!(c[1] != c[2], listing.contains(&format!("{}:", c[0])), "{line}");
    }
}

#[test]
fn retraining_with_the_same_seed_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_data(dir.path());
    let a = cmd_train(&cfg, false).unwrap();
    let bytes = std::fs::read(&a.checkpoint).unwrap();
    let b = cmd_train(&cfg, false).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(bytes, std::fs::read(&b.checkpoint).unwrap());
}

#[test]
fn resume_finishes_an_interrupted_run() {
    use scenegrid_core::models::Model;
    use scenegrid_core::training::{save_checkpoint, Pipeline, Progress, Trainer};

    let dir = tempfile::tempdir().unwrap();
    let cfg = with_data(dir.path());
    let full = cmd_train(&cfg, false).unwrap();
    let full_bytes = std::fs::read(&full.checkpoint).unwrap();

    // stop after the first epoch, as if the process had died
    let manifest = scenegrid_core::scene_io::DatasetManifest::load(&cfg.manifest_path()).unwrap();
    let train = manifest.load_split("train").unwrap();
    let val = manifest.load_split("val").unwrap();
    let pipeline = Pipeline::for_model(&cfg.model, None, cfg.augment_config());
    let mut trainer = Trainer::new(Model::new(cfg.model.clone(), cfg.train.seed).unwrap(), cfg.train.clone()).unwrap();
    let stop = Some(Progress { phase: 0, epoch: 1 });
    trainer.run(&pipeline, &train, &val, &manifest.taxonomy, stop, |_, _| Ok(())).unwrap();
    assert_eq!(trainer.log.len(), 1);
    let last = cfg.out_dir.join("train").join("last.ckpt");
    save_checkpoint(&trainer, &last).unwrap();

    let resumed = cmd_train(&cfg, true).unwrap();
    assert_eq!(resumed.log.len(), 2);
    assert_eq!(resumed.report, full.report);
    assert_eq!(std::fs::read(&resumed.checkpoint).unwrap(), full_bytes);

    // a checkpoint from another configuration is refused
    let mut other = cfg.clone();
    other.train.lr *= 2.0;
    assert_eq!(cmd_train(&other, true).err().unwrap().exit_code(), 1);
}

#[test]
fn coordinates_only_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_data(dir.path());
    let text = format!("[data]\ndir = \"{}\"\n{TINY}", cfg.data.dir.display());
    let path = write_config(dir.path(), &text);
    let xyz = dir.path().join("xyz");
    let out = scenegrid(
        &["train", "--variant", "resnet14", "--no-colour", "--seed", "1", "--out", xyz.to_str().unwrap()],
        Some(&path),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let snap = std::fs::read_to_string(xyz.join("train").join(CONFIG_SNAPSHOT)).unwrap();
    let used = ExperimentConfig::from_toml(&snap).unwrap();
    assert!(!used.model.colour);
    let ck = scenegrid_core::training::load_checkpoint(&xyz.join("train").join("model.ckpt")).unwrap();
    assert!(!ck.model.colour);
    assert_eq!(ck.model.in_channels(), 1);
}

#[test]
fn crop_and_ablation_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = with_data(dir.path());
    cmd_train(&cfg, false).unwrap();
    let base = cmd_eval(&cfg, None).unwrap().report;

    let sweep = cmd_sweep_crop(&cfg, None, &[0.5, 1.0]).unwrap();
    assert_eq!(sweep.uncropped, base);
    let full = &sweep.rows[1].report;
    assert_eq!((full.accuracy, full.mean_iou), (base.accuracy, base.mean_iou));
    assert_eq!(full.num_scenes, 4 * base.num_scenes);
    let csv = std::fs::read_to_string(cfg.out_dir.join("sweep-crop").join("crop.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("ratio,acc,miou,skipped"));
    assert_eq!(csv.lines().count(), 3);

    // an object class the generator never places leaves scenes untouched
    let manifest = scenegrid_core::scene_io::DatasetManifest::load(&cfg.manifest_path()).unwrap();
    let val = manifest.load_split("val").unwrap();
    let tax = &manifest.taxonomy;
    let absent = (0..tax.num_object_classes() as u16)
        .find(|&k| val.iter().all(|s| !s.cloud.labels().unwrap().contains(&k)))
        .map(|k| tax.object_classes[k as usize].clone());
    cfg.sweep.ablate_classes = vec!["wall".into()];
    cfg.sweep.ablate_classes.extend(absent.clone());
    let table = cmd_ablate_class(&cfg, None).unwrap();
    assert_eq!(table.baseline_recall, base.per_class_recall);
    if absent.is_some() {
        let row = &table.rows[1];
        assert_eq!(row.skipped, 0);
        assert!(row.delta.iter().flatten().all(|&d| d == 0.0));
    }
    let csv = std::fs::read_to_string(cfg.out_dir.join("ablate-class").join("ablation.csv")).unwrap();
    assert!(csv.starts_with("removed_class,skipped,apartment,"));
    assert!(csv.lines().nth(1).unwrap().starts_with("wall,"));

    cfg.sweep.ablate_classes = vec!["unicorn".into()];
    assert_eq!(cmd_ablate_class(&cfg, None).err().unwrap().exit_code(), 1);
}

#[test]
fn density_sweep_flags_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = with_data(dir.path());
    cfg.train.epochs = 1;
    let rows = cmd_sweep_density(&cfg, &[64, 1000]).unwrap();
    assert_eq!(rows[0].fallback_scenes, 0);
    assert_eq!(rows[1].fallback_scenes, rows[1].report.num_scenes);
    let csv = std::fs::read_to_string(cfg.out_dir.join("sweep-density").join("density.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "points,acc,miou,fallback_scenes");
    assert!(lines[1].starts_with("64,") && lines[2].starts_with("1000,"));
    assert!(lines[2].ends_with(",21"));
    let recall = std::fs::read_to_string(cfg.out_dir.join("sweep-density").join("density_recall.csv")).unwrap();
    assert_eq!(recall.lines().count(), 3);
    assert!(cfg.out_dir.join("sweep-density/points_64/model.ckpt").is_file());
}

#[test]
fn baselines_share_a_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_data(dir.path());
    // predicted labels need a decoder
    cmd_train(&cfg, false).unwrap();
    let err = cmd_baseline(&cfg, BaselineKind::RfPredicted, None).err().unwrap();
    assert_eq!(err.exit_code(), 1);

    let mut multi = cfg.clone();
    multi.model.variant = Variant::Resnet14Multitask;
    cmd_train(&multi, false).unwrap();
    let mut headers = Vec::new();
    for which in [BaselineKind::ColourNn, BaselineKind::RfOracle, BaselineKind::RfPredicted] {
        let r = cmd_baseline(&multi, which, None).unwrap();
        assert_eq!(r.num_scenes, 21);
        let csv = std::fs::read_to_string(multi.out_dir.join("baseline").join(format!("{}.csv", which.name()))).unwrap();
        headers.push(csv.lines().next().unwrap().to_string());
        assert_eq!(csv.lines().count(), 23);
    }
    assert!(headers.iter().all(|h| h == "class,count,recall,iou"));
    assert!(multi.out_dir.join("baseline/rf-oracle_forest.json").is_file());
}
