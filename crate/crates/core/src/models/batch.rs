use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::VoxelCloud;
use crate::nn::{Coord, CoordSet, Lattice, Matrix};
use crate::real::Real;
use crate::scene_io::PointCloud;

/// Voxelised scenes concatenated into one sparse tensor, one batch index per
/// scene. Each scene is shifted so its minimum voxel sits at the origin.
#[derive(Clone, Debug)]
pub struct VoxelBatch<T> {
    pub lattice: Lattice,
    pub features: Matrix<T>,
    /// Scene index of every row, per lattice level.
    pub segments: Vec<Arc<Vec<usize>>>,
    /// Rows of each scene at level 0.
    pub rows: Vec<Range<usize>>,
    /// Per-voxel object ids, when every scene is labelled.
    pub voxel_labels: Option<Vec<Option<usize>>>,
}

impl<T: Real> VoxelBatch<T> {
    pub fn new(scenes: &[&VoxelCloud], colour: bool, levels: usize) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::Empty("empty batch".into()));
        }
        let channels = if colour { 3 } else { 1 };
        let total: usize = scenes.iter().map(|s| s.len()).sum();
        let mut coords: Vec<Coord> = Vec::with_capacity(total);
        let mut feats = Vec::with_capacity(total * channels);
        let mut rows = Vec::with_capacity(scenes.len());
        let mut labels = Some(Vec::with_capacity(total));
        for (b, scene) in scenes.iter().enumerate() {
            if scene.is_empty() {
                return Err(Error::Empty(format!("scene {b} of the batch has no voxels")));
            }
            let mut min = [i32::MAX; 3];
            for c in &scene.coords {
                for k in 0..3 {
                    min[k] = min[k].min(c[k]);
                }
            }
            let start = coords.len();
            // lexicographic order survives the shift, so rows stay sorted
            coords.extend(scene.coords.iter().map(|c| [b as i32, c[0] - min[0], c[1] - min[1], c[2] - min[2]]));
            rows.push(start..coords.len());
            for f in scene.features(colour)? {
                feats.extend(f.into_iter().map(T::from_f64));
            }
            match (&mut labels, &scene.labels) {
                (Some(acc), Some(l)) => acc.extend(l.iter().map(|&v| Some(v as usize))),
                _ => labels = None,
            }
        }
        let lattice = Lattice::build(CoordSet::new(coords, 1)?, levels)?;
        let segments = lattice
            .levels
            .iter()
            .map(|l| Arc::new(l.batch_indices()))
            .collect();
        Ok(Self {
            features: Matrix::from_vec(total, channels, feats)?,
            lattice,
            segments,
            rows,
            voxel_labels: labels,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.rows.len()
    }

    pub fn num_voxels(&self) -> usize {
        self.features.rows()
    }
}

/// Fixed-size point sets stacked row-wise. Positions are centred on each
/// scene's bounding-box centre; colours, when used, are scaled to `[0, 1]`.
#[derive(Clone, Debug)]
pub struct PointBatch<T> {
    pub features: Matrix<T>,
    pub segment: Arc<Vec<usize>>,
    pub points_per_scene: usize,
}

impl<T: Real> PointBatch<T> {
    pub fn new(scenes: &[&PointCloud], colour: bool, num_points: usize) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::Empty("empty batch".into()));
        }
        let channels = if colour { 6 } else { 3 };
        let mut feats = Vec::with_capacity(scenes.len() * num_points * channels);
        for (b, s) in scenes.iter().enumerate() {
            if s.len() != num_points {
                return Err(Error::shape(format!(
                    "scene {b} has {} points, PointNet expects exactly {num_points}",
                    s.len()
                )));
            }
            let (lo, hi) = s.bounds();
            let centre = [0, 1, 2].map(|k| 0.5 * (lo[k] + hi[k]));
            let colours = if colour {
                Some(s.colours().ok_or_else(|| Error::Missing("colour features requested but cloud has no colours".into()))?)
            } else {
                None
            };
            for (i, p) in s.positions().iter().enumerate() {
                feats.extend((0..3).map(|k| T::from_f64(p[k] - centre[k])));
                if let Some(c) = colours {
                    feats.extend(c[i].iter().map(|&v| T::from_f64(v as f64 / 255.0)));
                }
            }
        }
        let n = scenes.len() * num_points;
        Ok(Self {
            features: Matrix::from_vec(n, channels, feats)?,
            segment: Arc::new((0..n).map(|r| r / num_points).collect()),
            points_per_scene: num_points,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.segment.len() / self.points_per_scene
    }
}
