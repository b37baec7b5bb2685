use rand::{Rng as _, SeedableRng};

use super::*;
use crate::geometry::{voxelise, VoxelCloud};
use crate::nn::{gradient_check, Matrix};
use crate::scene_io::PointCloud;
use crate::seed::Rng;

fn random_voxels(rng: &mut Rng, n: usize, extent: i32) -> VoxelCloud {
    let mut coords = std::collections::BTreeSet::new();
    while coords.len() < n {
        coords.insert([
            rng.random_range(0..extent),
            rng.random_range(0..extent),
            rng.random_range(0..extent),
        ]);
    }
    let coords: Vec<[i32; 3]> = coords.into_iter().collect();
    VoxelCloud {
        colours: Some((0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect()),
        labels: Some((0..n).map(|_| rng.random_range(0..5)).collect()),
        point_voxel: (0..n).collect(),
        coords,
        voxel_size: 0.1,
    }
}

fn tiny(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        widths: vec![2, 3, 3, 4],
        head_hidden: 3,
        num_scene_classes: 4,
        num_object_classes: 5,
        ..ModelConfig::default()
    }
}

#[test]
fn occupancy_input_gives_256_latent() {
    let cfg = ModelConfig {
        colour: false,
        ..ModelConfig::default()
    };
    assert_eq!(cfg.weighted_layers(), 14);
    let model = Model::<f32>::new(cfg, 0).unwrap();
    let mut rng = Rng::seed_from_u64(1);
    let v = random_voxels(&mut rng, 40, 10);
    let batch = VoxelBatch::new(&[&v], false, 4).unwrap();
    assert_eq!(batch.features.cols(), 1);
    let mut t = Tape::new(&model.params);
    let out = model.forward(&mut t, Input::Voxels(&batch), ForwardMode::EVAL).unwrap();
    assert_eq!(t.value(out.latent).shape(), (1, 256));
    assert_eq!(t.value(out.scores.unwrap()).shape(), (1, 21));
}

#[test]
fn parameter_counts_are_pinned() {
    let single = Model::<f32>::new(ModelConfig::default(), 0).unwrap();
    let multi = Model::<f32>::new(
        ModelConfig {
            variant: Variant::Resnet14Multitask,
            ..ModelConfig::default()
        },
        0,
    )
    .unwrap();
    let pointnet = Model::<f32>::new(
        ModelConfig {
            variant: Variant::Pointnet,
            ..ModelConfig::default()
        },
        0,
    )
    .unwrap();
    assert_eq!(single.params.trainable_count(), 3_899_893);
    assert_eq!(multi.params.trainable_count(), PINNED_MULTI);
    assert_eq!(pointnet.params.trainable_count(), PINNED_POINTNET);
    let again = Model::<f32>::new(ModelConfig::default(), 7).unwrap();
    assert_eq!(again.params.trainable_count(), single.params.trainable_count());
}

const PINNED_MULTI: usize = 9_985_993;
const PINNED_POINTNET: usize = 804_821;

fn conv_weights(m: &Model<f32>) -> usize {
    m.params
        .iter()
        .filter(|(_, p)| p.shape.len() == 3)
        .map(|(_, p)| p.len())
        .sum()
}

#[test]
fn doubling_widths_quadruples_conv_parameters() {
    let base = Model::<f32>::new(ModelConfig::default(), 0).unwrap();
    let wide = Model::<f32>::new(
        ModelConfig {
            widths: vec![64, 128, 256, 512],
            ..ModelConfig::default()
        },
        0,
    )
    .unwrap();
    let ratio = conv_weights(&wide) as f64 / conv_weights(&base) as f64;
    assert!((3.9..=4.0).contains(&ratio), "{ratio}");
}

#[test]
fn zero_latent_and_biases_give_zero_logits() {
    let model = Model::<f64>::new(ModelConfig::default(), 0).unwrap();
    let mut t = Tape::new(&model.params);
    let z = t.input(Matrix::zeros(2, 256));
    let Arch::Voxel { head, .. } = &model.arch else { unreachable!() };
    let y = head.forward(&mut t, z).unwrap();
    assert_eq!(t.value(y).shape(), (2, 21));
    assert!(t.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn head_gradients_match_finite_differences() {
    let model = Model::<f64>::new(ModelConfig::default(), 3).unwrap();
    let Arch::Voxel { head, .. } = model.arch.clone() else { unreachable!() };
    let mut params = model.params.clone();
    let mut rng = Rng::seed_from_u64(2);
    let z: Vec<f64> = (0..2 * 256).map(|_| rng.random_range(-1.0..1.0)).collect();
    let z = Matrix::from_vec(2, 256, z).unwrap();
    let report = gradient_check(&mut params, 1e-5, 7, |t| {
        let zv = t.input(z.clone());
        let y = head.forward(t, zv)?;
        t.cross_entropy(y, &[Some(3), Some(11)])
    })
    .unwrap();
    assert!(report.checked > 1000);
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn decoder_resolution_and_widths() {
    let cfg = ModelConfig {
        variant: Variant::Resnet14Multitask,
        widths: vec![4, 6, 8, 10],
        ..ModelConfig::default()
    };
    let model = Model::<f64>::new(cfg, 0).unwrap();
    for (level, w) in [(2usize, 8usize), (1, 6), (0, 4)] {
        let p = model.params.id(&format!("decoder.l{level}.conv0.weight")).unwrap();
        assert_eq!(model.params.get(p).shape, vec![27, 2 * w, 2 * w]);
    }
    let mut rng = Rng::seed_from_u64(4);
    let scenes = [random_voxels(&mut rng, 37, 8), random_voxels(&mut rng, 25, 8)];
    let batch = VoxelBatch::new(&[&scenes[0], &scenes[1]], true, 4).unwrap();
    let mut t = Tape::new(&model.params);
    let mode = ForwardMode {
        segment: true,
        ..ForwardMode::train()
    };
    let out = model.forward(&mut t, Input::Voxels(&batch), mode).unwrap();
    assert_eq!(t.value(out.point_logits.unwrap()).shape(), (62, 20));
    assert_eq!(t.value(out.scores.unwrap()).shape(), (2, 21));
    assert_eq!(batch.rows, vec![0..37, 37..62]);
}

fn multitask_loss_fn<'a>(
    model: &'a Model<f64>,
    batch: &'a VoxelBatch<f64>,
    targets: &'a [Option<usize>],
) -> impl Fn(&mut Tape<'_, f64>) -> crate::Result<Var> + 'a {
    move |t| {
        let mode = ForwardMode {
            segment: true,
            ..ForwardMode::train()
        };
        let out = model.forward(t, Input::Voxels(batch), mode)?;
        let cls = t.cross_entropy(out.scores.unwrap(), targets)?;
        let sem = t.cross_entropy(out.point_logits.unwrap(), batch.voxel_labels.as_ref().unwrap())?;
        let cls = t.scale(cls, 0.4);
        let sem = t.scale(sem, 0.6);
        t.add(cls, sem)
    }
}

#[test]
fn multitask_network_gradients_match_finite_differences() {
    let model = Model::<f64>::new(tiny(Variant::Resnet14Multitask), 5).unwrap();
    let mut rng = Rng::seed_from_u64(5);
    let scenes = [random_voxels(&mut rng, 30, 6)];
    let batch = VoxelBatch::new(&[&scenes[0]], true, 4).unwrap();
    // batch norm over a single coarse voxel outputs exactly beta; move the
    // shifts off zero so no relu sits on its kink
    let mut model = model;
    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        if model.params.get(id).name.ends_with(".beta") {
            for v in &mut model.params.get_mut(id).values {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }
    let mut params = model.params.clone();
    let report = gradient_check(&mut params, 1e-5, 1, multitask_loss_fn(&model, &batch, &[Some(2)])).unwrap();
    assert_eq!(report.checked, model.params.trainable_count());
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn classification_is_independent_of_decoder_and_both_losses_reach_encoder() {
    let model = Model::<f64>::new(tiny(Variant::Resnet14Multitask), 6).unwrap();
    let mut rng = Rng::seed_from_u64(6);
    let scenes: Vec<_> = (0..3).map(|_| random_voxels(&mut rng, 40, 8)).collect();
    let refs: Vec<_> = scenes.iter().collect();
    let batch = VoxelBatch::new(&refs, true, 4).unwrap();
    let run = |segment: bool| {
        let mut t = Tape::new(&model.params);
        let mode = ForwardMode {
            segment,
            ..ForwardMode::train()
        };
        let out = model.forward(&mut t, Input::Voxels(&batch), mode).unwrap();
        t.value(out.scores.unwrap()).clone()
    };
    let (a, b) = (run(false), run(true));
    assert_eq!(a, b);
    assert_eq!(a.rows(), 3);

    let stem = model.params.id("encoder.stem.weight").unwrap();
    for use_cls in [true, false] {
        let mut t = Tape::new(&model.params);
        let mode = ForwardMode {
            segment: true,
            ..ForwardMode::train()
        };
        let out = model.forward(&mut t, Input::Voxels(&batch), mode).unwrap();
        let l = if use_cls {
            t.cross_entropy(out.scores.unwrap(), &[Some(0), Some(1), Some(2)]).unwrap()
        } else {
            t.cross_entropy(out.point_logits.unwrap(), batch.voxel_labels.as_ref().unwrap())
                .unwrap()
        };
        let g = t.backward(l).unwrap();
        assert!(g.get(stem).unwrap().iter().any(|&v| v != 0.0));
    }
}

#[test]
fn voxel_model_ignores_point_order_and_integer_translation() {
    let model = Model::<f64>::new(tiny(Variant::Resnet14), 8).unwrap();
    let mut rng = Rng::seed_from_u64(8);
    let n = 300;
    let pos: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..1.0)])
        .collect();
    let col: Vec<[u8; 3]> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let cloud = PointCloud::new(pos.clone(), Some(col.clone()), None).unwrap();
    let mut order: Vec<usize> = (0..n).collect();
    order.reverse();
    let shuffled = cloud.select(&order).unwrap();
    let shift = [0.1 * 7.0, -0.1 * 3.0, 0.1 * 2.0];
    let moved = cloud
        .with_positions(pos.iter().map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]]).collect())
        .unwrap();
    let logits = |c: &PointCloud| {
        let v = voxelise(c, 0.1, 0).unwrap();
        let batch = VoxelBatch::new(&[&v], true, 4).unwrap();
        let mut t = Tape::new(&model.params);
        let out = model.forward(&mut t, Input::Voxels(&batch), ForwardMode::EVAL).unwrap();
        t.value(out.scores.unwrap()).clone()
    };
    let base = logits(&cloud);
    assert_eq!(base, logits(&shuffled));
    let m = logits(&moved);
    let diff = base.data().iter().zip(m.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-9, "{diff}");
}

fn random_cloud(rng: &mut Rng, n: usize) -> PointCloud {
    let pos = (0..n).map(|_| [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0), rng.random_range(0.0..2.0)]).collect();
    let col = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    PointCloud::new(pos, Some(col), None).unwrap()
}

#[test]
fn pointnet_is_permutation_and_duplication_invariant() {
    let cfg = ModelConfig {
        variant: Variant::Pointnet,
        num_points: 64,
        ..ModelConfig::default()
    };
    let model = Model::<f64>::new(cfg, 9).unwrap();
    let mut rng = Rng::seed_from_u64(9);
    let cloud = random_cloud(&mut rng, 64);
    let logits = |c: &PointCloud, n: usize, train: bool| {
        let batch = PointBatch::new(&[c], true, n).unwrap();
        let mut t = Tape::new(&model.params);
        let mode = ForwardMode { train, ..ForwardMode::EVAL };
        let out = model.forward(&mut t, Input::Points(&batch), mode).unwrap();
        t.value(out.scores.unwrap()).clone()
    };
    let base = logits(&cloud, 64, false);
    assert_eq!(base.shape(), (1, 21));
    let order: Vec<usize> = (0..64).rev().collect();
    assert_eq!(base, logits(&cloud.select(&order).unwrap(), 64, false));
    let doubled: Vec<usize> = (0..64).chain(0..64).collect();
    assert_eq!(base, logits(&cloud.select(&doubled).unwrap(), 128, false));
    assert!(PointBatch::<f64>::new(&[&cloud], true, 32).is_err());
}

#[test]
fn pointnet_gradients_match_finite_differences() {
    let cfg = ModelConfig {
        variant: Variant::Pointnet,
        num_points: 12,
        num_scene_classes: 5,
        ..ModelConfig::default()
    };
    let model = Model::<f64>::new(cfg, 10).unwrap();
    let mut rng = Rng::seed_from_u64(10);
    let clouds = [random_cloud(&mut rng, 12), random_cloud(&mut rng, 12)];
    let batch = PointBatch::new(&[&clouds[0], &clouds[1]], true, 12).unwrap();
    let mut params = model.params.clone();
    let report = gradient_check(&mut params, 1e-5, 997, |t| {
        let out = model.forward(t, Input::Points(&batch), ForwardMode::train())?;
        t.cross_entropy(out.scores.unwrap(), &[Some(1), Some(4)])
    })
    .unwrap();
    assert!(report.checked > 500);
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn input_kind_must_match_variant() {
    let model = Model::<f64>::new(tiny(Variant::Resnet14), 0).unwrap();
    let mut rng = Rng::seed_from_u64(11);
    let c = random_cloud(&mut rng, 8);
    let batch = PointBatch::new(&[&c], true, 8).unwrap();
    let mut t = Tape::new(&model.params);
    assert!(model.forward(&mut t, Input::Points(&batch), ForwardMode::EVAL).is_err());
    let mode = ForwardMode {
        segment: true,
        ..ForwardMode::EVAL
    };
    let v = random_voxels(&mut rng, 10, 5);
    let vb = VoxelBatch::new(&[&v], true, 4).unwrap();
    assert!(model.forward(&mut t, Input::Voxels(&vb), mode).is_err());
    assert!(ModelConfig {
        widths: vec![1, 2, 0, 4],
        ..ModelConfig::default()
    }
    .validate()
    .is_err());
}
