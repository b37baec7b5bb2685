//! Geometry-free baselines: colour-histogram nearest neighbour and random
//! forests over object-label histograms.

mod forest;

use serde::{Deserialize, Serialize};

pub use forest::{rf_predict, rf_train, Forest, ForestConfig, Prediction, Tree, FOREST_VERSION};

use crate::error::{Error, Result};
use crate::metrics::{evaluate_classes, EvalReport};
use crate::models::Model;
use crate::scene_io::{ObjectId, PointCloud, SceneSample, Taxonomy};
use crate::training::{predict_voxel_labels, Pipeline};

pub const BINS_PER_CHANNEL: usize = 10;

/// 10 equal-width bins over `[0, 255]` per channel, each channel normalised
/// to sum 1, concatenated R, G, B.
pub fn colour_histogram(cloud: &PointCloud) -> Result<Vec<f64>> {
    let colours = cloud
        .colours()
        .ok_or_else(|| Error::Missing("colour histogram needs colours".into()))?;
    if colours.is_empty() {
        return Err(Error::Empty("colour histogram of an empty cloud".into()));
    }
    let mut h = vec![0.0; 3 * BINS_PER_CHANNEL];
    for c in colours {
        for (ch, &v) in c.iter().enumerate() {
            let bin = (v as usize * BINS_PER_CHANNEL / 256).min(BINS_PER_CHANNEL - 1);
            h[ch * BINS_PER_CHANNEL + bin] += 1.0;
        }
    }
    let n = colours.len() as f64;
    h.iter_mut().for_each(|v| *v /= n);
    Ok(h)
}

/// Normalised frequency of each object id.
pub fn label_histogram(labels: &[ObjectId], num_classes: usize) -> Result<Vec<f64>> {
    let ids: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    label_histogram_ids(&ids, num_classes)
}

fn label_histogram_ids(labels: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::Empty("label histogram of no labels".into()));
    }
    let mut h = vec![0.0; num_classes];
    for &l in labels {
        *h.get_mut(l)
            .ok_or_else(|| Error::invalid(format!("object id {l} >= {num_classes}")))? += 1.0;
    }
    let n = labels.len() as f64;
    h.iter_mut().for_each(|v| *v /= n);
    Ok(h)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    L1,
    L2,
    ChiSquared,
}

impl Distance {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        let pairs = a.iter().zip(b);
        match self {
            Distance::L1 => pairs.map(|(x, y)| (x - y).abs()).sum(),
            Distance::L2 => pairs.map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Distance::ChiSquared => pairs
                .map(|(x, y)| if x + y > 0.0 { (x - y) * (x - y) / (x + y) } else { 0.0 })
                .sum::<f64>()
                * 0.5,
        }
    }
}

/// Label of the nearest reference; ties go to the lowest reference index.
pub fn nn_classify(query: &[f64], references: &[(Vec<f64>, usize)], metric: Distance) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (r, label) in references {
        if r.len() != query.len() {
            return Err(Error::shape(format!(
                "histogram of length {} vs reference of length {}",
                query.len(),
                r.len()
            )));
        }
        let d = metric.eval(query, r);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, *label));
        }
    }
    best.map(|(_, l)| l)
        .ok_or_else(|| Error::Empty("nearest neighbour needs at least one reference".into()))
}

/// Colour-histogram nearest neighbour: references from `train`, evaluated
/// on `test`.
pub fn colour_nn_pipeline(
    train: &[SceneSample],
    test: &[SceneSample],
    metric: Distance,
    taxonomy: &Taxonomy,
) -> Result<EvalReport> {
    let refs = train
        .iter()
        .map(|s| Ok((colour_histogram(&s.cloud)?, s.scene_label)))
        .collect::<Result<Vec<_>>>()?;
    let preds = test
        .iter()
        .map(|s| nn_classify(&colour_histogram(&s.cloud)?, &refs, metric))
        .collect::<Result<Vec<_>>>()?;
    let truths: Vec<usize> = test.iter().map(|s| s.scene_label).collect();
    evaluate_classes(&preds, &truths, taxonomy)
}

/// Where object labels for the histograms come from.
pub enum LabelSource<'a> {
    /// Ground-truth point labels.
    Oracle,
    /// Per-point argmax of a segmentation model, propagated from voxels.
    Predicted {
        model: &'a Model<f32>,
        pipeline: &'a Pipeline,
        seed: u64,
    },
}

/// Object-label histograms of `samples` under `source`.
pub fn label_histograms(samples: &[SceneSample], source: &LabelSource<'_>, taxonomy: &Taxonomy) -> Result<Vec<Vec<f64>>> {
    let k = taxonomy.num_object_classes();
    match source {
        LabelSource::Oracle => samples
            .iter()
            .map(|s| {
                let labels = s
                    .cloud
                    .labels()
                    .ok_or_else(|| Error::Missing(format!("scene {} has no point labels", s.scene_id)))?;
                label_histogram(labels, k)
            })
            .collect(),
        LabelSource::Predicted { model, pipeline, seed } => {
            if !model.has_decoder() {
                return Err(Error::Missing("predicted labels need a model with a segmentation decoder".into()));
            }
            let refs: Vec<&SceneSample> = samples.iter().collect();
            let prepared = pipeline.prepare_all(&refs, false, crate::seed::derive(*seed, "eval"))?;
            let per_voxel = predict_voxel_labels(model, pipeline, &prepared, 16)?;
            prepared
                .iter()
                .zip(&per_voxel)
                .map(|(p, v)| {
                    let vox = p.voxels.as_ref().expect("voxel pipeline");
                    label_histogram_ids(&vox.to_points(v), k)
                })
                .collect()
        }
    }
}

/// Random forest over object-label histograms, trained on `train` and
/// evaluated on `test`.
pub fn histogram_pipeline(
    train: &[SceneSample],
    test: &[SceneSample],
    source: &LabelSource<'_>,
    forest: &ForestConfig,
    taxonomy: &Taxonomy,
) -> Result<(EvalReport, Forest)> {
    let x = label_histograms(train, source, taxonomy)?;
    let y: Vec<usize> = train.iter().map(|s| s.scene_label).collect();
    let model = rf_train(&x, &y, taxonomy.num_scene_classes(), forest)?;
    let xt = label_histograms(test, source, taxonomy)?;
    let preds = xt
        .iter()
        .map(|row| rf_predict(&model, row).map(|p| p.class))
        .collect::<Result<Vec<_>>>()?;
    let truths: Vec<usize> = test.iter().map(|s| s.scene_label).collect();
    Ok((evaluate_classes(&preds, &truths, taxonomy)?, model))
}

#[cfg(test)]
mod tests {
    use rand::{Rng as _, SeedableRng};

    use super::*;
    use crate::seed::Rng;

    fn cloud_with(colours: Vec<[u8; 3]>) -> PointCloud {
        let n = colours.len();
        PointCloud::new(vec![[0.0; 3]; n], Some(colours), None).unwrap()
    }

    #[test]
    fn red_cloud_histogram() {
        let h = colour_histogram(&cloud_with(vec![[255, 0, 0]; 5])).unwrap();
        let mut want = vec![0.0; 30];
        want[9] = 1.0;
        want[10] = 1.0;
        want[20] = 1.0;
        assert_eq!(h, want);
        assert!(colour_histogram(&cloud_with(vec![[255, 0, 0]; 5]).without_colours()).is_err());
    }

    #[test]
    fn duplication_and_order_invariance() {
        let mut rng = Rng::seed_from_u64(1);
        let c: Vec<[u8; 3]> = (0..200).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let mut doubled = c.clone();
        doubled.extend_from_slice(&c);
        let mut reversed = c.clone();
        reversed.reverse();
        let h = colour_histogram(&cloud_with(c)).unwrap();
        assert_eq!(h, colour_histogram(&cloud_with(doubled)).unwrap());
        assert_eq!(h, colour_histogram(&cloud_with(reversed)).unwrap());
        for ch in 0..3 {
            let s: f64 = h[ch * 10..(ch + 1) * 10].iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_colours_fill_bins_evenly() {
        let mut rng = Rng::seed_from_u64(2);
        let c: Vec<[u8; 3]> = (0..100_000).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let h = colour_histogram(&cloud_with(c)).unwrap();
        // bin widths are 25 or 26 of the 256 levels
        assert!(h.iter().all(|&v| (v - 0.1).abs() <= 0.02), "{h:?}");
    }

    #[test]
    fn label_histogram_examples() {
        assert_eq!(label_histogram(&[0, 0, 1], 3).unwrap(), vec![2.0 / 3.0, 1.0 / 3.0, 0.0]);
        assert_eq!(label_histogram(&[2], 4).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        assert!(label_histogram(&[], 3).is_err());
        assert!(label_histogram(&[3], 3).is_err());
        let mut rng = Rng::seed_from_u64(3);
        for _ in 0..20 {
            let l: Vec<u16> = (0..rng.random_range(1..500)).map(|_| rng.random_range(0..20)).collect();
            let s: f64 = label_histogram(&l, 20).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_neighbour_matches_linear_scan() {
        let mut rng = Rng::seed_from_u64(4);
        let refs: Vec<(Vec<f64>, usize)> = (0..50)
            .map(|_| ((0..30).map(|_| rng.random::<f64>()).collect(), rng.random_range(0..21)))
            .collect();
        for metric in [Distance::L1, Distance::L2, Distance::ChiSquared] {
            for _ in 0..20 {
                let q: Vec<f64> = (0..30).map(|_| rng.random()).collect();
                let dists: Vec<f64> = refs.iter().map(|(r, _)| metric.eval(&q, r)).collect();
                let min = dists.iter().copied().fold(f64::INFINITY, f64::min);
                let first = dists.iter().position(|&d| d == min).unwrap();
                assert_eq!(nn_classify(&q, &refs, metric).unwrap(), refs[first].1);
            }
            assert_eq!(nn_classify(&refs[7].0, &refs, metric).unwrap(), refs[7].1);
        }
        let single = vec![(vec![0.0; 30], 5)];
        assert_eq!(nn_classify(&[1.0; 30], &single, Distance::L1).unwrap(), 5);
        // equal distances resolve to the first reference
        let tied = vec![(vec![1.0], 3), (vec![-1.0], 4)];
        assert_eq!(nn_classify(&[0.0], &tied, Distance::L1).unwrap(), 3);
        assert!(nn_classify(&[0.0; 3], &single, Distance::L1).is_err());
        assert!(nn_classify(&[0.0; 30], &[], Distance::L1).is_err());
    }
}
