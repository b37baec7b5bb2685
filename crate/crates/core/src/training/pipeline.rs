use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{augment, farthest_point_sample, random_subsample, voxelise, AugmentConfig, VoxelCloud};
use crate::models::{ModelConfig, PointBatch, Variant, VoxelBatch};
use crate::real::Real;
use crate::scene_io::{PointCloud, SceneSample};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Random,
    Fps,
}

/// How a scene becomes network input: optional augmentation, optional
/// subsampling to a fixed point count, then voxelisation (voxel models) or
/// point stacking (PointNet).
#[derive(Clone, Debug, PartialEq)]
pub struct Pipeline {
    pub variant: Variant,
    pub colour: bool,
    pub voxel_size: f64,
    /// Points kept per scene; `None` keeps every point (voxel models only).
    pub num_points: Option<usize>,
    pub sampler: Sampler,
    pub augment: Option<AugmentConfig>,
}

/// Model input built from one batch of scenes.
pub enum Prepared<T> {
    Voxels(VoxelBatch<T>),
    Points(PointBatch<T>),
}

/// A scene after preprocessing. `fallback` marks scenes that had fewer points
/// than requested and were kept whole (voxel models) or padded by repeating
/// points (PointNet).
#[derive(Clone, Debug)]
pub struct PreparedScene {
    pub voxels: Option<VoxelCloud>,
    pub points: Option<PointCloud>,
    pub fallback: bool,
}

impl Pipeline {
    pub fn for_model(cfg: &ModelConfig, num_points: Option<usize>, augment: Option<AugmentConfig>) -> Self {
        let num_points = match cfg.variant {
            Variant::Pointnet => Some(num_points.unwrap_or(cfg.num_points)),
            _ => num_points,
        };
        Self {
            variant: cfg.variant,
            colour: cfg.colour,
            voxel_size: cfg.voxel_size,
            num_points,
            sampler: Sampler::Random,
            augment,
        }
    }

    /// Preprocesses one scene. `train` enables augmentation; `seed` drives
    /// every random choice.
    pub fn prepare(&self, sample: &SceneSample, train: bool, seed: u64) -> Result<PreparedScene> {
        let mut cloud = match (&self.augment, train) {
            (Some(cfg), true) => augment(&sample.cloud, cfg, seed::derive(seed, "augment"))?,
            _ => sample.cloud.clone(),
        };
        if !self.colour {
            cloud = cloud.without_colours();
        }
        let mut fallback = false;
        if let Some(n) = self.num_points {
            if n == 0 {
                return Err(Error::invalid("num_points must be positive"));
            }
            if cloud.len() > n {
                let s = seed::derive(seed, "subsample");
                cloud = match self.sampler {
                    Sampler::Random => random_subsample(&cloud, n, s)?,
                    Sampler::Fps => {
                        let mut idx = farthest_point_sample(&cloud, n, s)?;
                        idx.sort_unstable();
                        cloud.select(&idx)?
                    }
                };
            } else if cloud.len() < n {
                fallback = true;
                if self.variant == Variant::Pointnet {
                    let idx: Vec<usize> = (0..n).map(|i| i % cloud.len()).collect();
                    cloud = cloud.select(&idx)?;
                }
            }
        }
        Ok(match self.variant {
            Variant::Pointnet => PreparedScene {
                voxels: None,
                points: Some(cloud),
                fallback,
            },
            _ => PreparedScene {
                voxels: Some(voxelise(&cloud, self.voxel_size, seed::derive(seed, "voxelise"))?),
                points: None,
                fallback,
            },
        })
    }

    /// Preprocesses scenes in parallel; scene `i` uses
    /// `derive_indexed(seed, "scene", i)`. Output order matches input order.
    pub fn prepare_all(&self, samples: &[&SceneSample], train: bool, seed: u64) -> Result<Vec<PreparedScene>> {
        samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| self.prepare(s, train, seed::derive_indexed(seed, "scene", i as u64)))
            .collect()
    }

    pub fn batch<T: Real>(&self, scenes: &[&PreparedScene], levels: usize) -> Result<Prepared<T>> {
        match self.variant {
            Variant::Pointnet => {
                let pts: Vec<&PointCloud> = scenes
                    .iter()
                    .map(|s| s.points.as_ref().ok_or_else(|| Error::invalid("scene was not prepared for PointNet")))
                    .collect::<Result<_>>()?;
                let n = self.num_points.ok_or_else(|| Error::Config("PointNet needs num_points".into()))?;
                Ok(Prepared::Points(PointBatch::new(&pts, self.colour, n)?))
            }
            _ => {
                let vox: Vec<&VoxelCloud> = scenes
                    .iter()
                    .map(|s| s.voxels.as_ref().ok_or_else(|| Error::invalid("scene was not voxelised")))
                    .collect::<Result<_>>()?;
                Ok(Prepared::Voxels(VoxelBatch::new(&vox, self.colour, levels)?))
            }
        }
    }
}
