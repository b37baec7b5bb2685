use scenegrid_core::baselines::{colour_nn_pipeline, histogram_pipeline, Distance, ForestConfig, LabelSource};
use scenegrid_core::models::{Model, ModelConfig, Variant};
use scenegrid_core::scene_io::{generate_scene, generate_synthetic_dataset, DatasetManifest, SceneSample, SynthConfig};
use scenegrid_core::training::{load_checkpoint, predict, save_checkpoint, Pipeline, TrainConfig, Trainer};

fn synth() -> SynthConfig {
    SynthConfig {
        scenes_per_class: 4,
        val_per_class: 1,
        points_per_scene: [150, 200],
        seed: 3,
        ..Default::default()
    }
}

fn dataset(dir: &std::path::Path) -> (DatasetManifest, Vec<SceneSample>, Vec<SceneSample>) {
    generate_synthetic_dataset(&synth(), dir).unwrap();
    let m = DatasetManifest::load(&dir.join("manifest.toml")).unwrap();
    let train = m.load_split("train").unwrap();
    let val = m.load_split("val").unwrap();
    (m, train, val)
}

fn tiny_multitask() -> ModelConfig {
    ModelConfig {
        variant: Variant::Resnet14Multitask,
        widths: vec![4, 6, 8, 8],
        head_hidden: 8,
        voxel_size: 0.3,
        ..Default::default()
    }
}

#[test]
fn written_scenes_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let (m, train, val) = dataset(dir.path());
    assert_eq!(train.len(), 21 * 3);
    assert_eq!(val.len(), 21);
    m.validate().unwrap();
    for s in train.iter().chain(&val) {
        let (class, index) = s.scene_id.rsplit_once('_').unwrap();
        let c = m.taxonomy.scene_id(class).unwrap();
        assert_eq!(c, s.scene_label);
        let fresh = generate_scene(&synth(), c, index.parse().unwrap()).unwrap();
        assert_eq!(fresh.cloud.len(), s.cloud.len());
        assert_eq!(fresh.cloud.labels(), s.cloud.labels());
        assert_eq!(fresh.cloud.colours(), s.cloud.colours());
        for (a, b) in fresh.cloud.positions().iter().zip(s.cloud.positions()) {
            assert!((0..3).all(|i| (a[i] - b[i]).abs() < 1e-6));
        }
    }
}

#[test]
fn trained_model_survives_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (m, train, val) = dataset(dir.path());
    let cfg = TrainConfig {
        batch_size: 8,
        epochs: 1,
        phase_epochs: [1, 1, 1],
        seed: 9,
        ..Default::default()
    };
    let model = Model::new(tiny_multitask(), cfg.seed).unwrap();
    let pipeline = Pipeline::for_model(&model.config, None, None);
    let mut trainer = Trainer::new(model, cfg).unwrap();
    trainer.run(&pipeline, &train, &val, &m.taxonomy, None, |_, _| Ok(())).unwrap();
    assert!(trainer.is_finished());
    assert_eq!(trainer.log.len(), 3);

    let path = dir.path().join("m.ckpt");
    save_checkpoint(&trainer, &path).unwrap();
    let restored = load_checkpoint(&path).unwrap().model().unwrap();
    let a = predict(&trainer.model, &pipeline, &val, 8, 1).unwrap();
    let b = predict(&restored, &pipeline, &val, 8, 1).unwrap();
    assert_eq!(a, b);
}

#[test]
fn oracle_labels_beat_an_untrained_segmenter() {
    let dir = tempfile::tempdir().unwrap();
    let (m, train, val) = dataset(dir.path());
    let tax = &m.taxonomy;
    let forest = ForestConfig {
        trees: 30,
        seed: 4,
        ..Default::default()
    };
    let (oracle, _) = histogram_pipeline(&train, &val, &LabelSource::Oracle, &forest, tax).unwrap();
    let model = Model::new(tiny_multitask(), 0).unwrap();
    let pipeline = Pipeline::for_model(&model.config, None, None);
    let source = LabelSource::Predicted {
        model: &model,
        pipeline: &pipeline,
        seed: 2,
    };
    let (predicted, f) = histogram_pipeline(&train, &val, &source, &forest, tax).unwrap();
    assert_eq!(f.trees.len(), 30);
    assert!(oracle.accuracy >= predicted.accuracy, "{} < {}", oracle.accuracy, predicted.accuracy);
    assert!(oracle.accuracy > 0.5, "{}", oracle.accuracy);

    let colour = colour_nn_pipeline(&train, &val, Distance::L1, tax).unwrap();
    assert_eq!(colour.num_scenes, val.len());

    // a classifier-only model cannot supply labels
    let plain = Model::new(ModelConfig { variant: Variant::Resnet14, ..tiny_multitask() }, 0).unwrap();
    let source = LabelSource::Predicted {
        model: &plain,
        pipeline: &pipeline,
        seed: 2,
    };
    assert!(histogram_pipeline(&train, &val, &source, &forest, tax).is_err());
}
