//! Point-cloud preprocessing: sampling, voxelisation, cropping, class removal
//! and the training-time augmentation pipeline. Everything here is a pure
//! function of its inputs and seed.

use std::collections::HashMap;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene_io::{ObjectId, PointCloud};
use crate::seed;

/// Greedy farthest point sampling. The first index is drawn from the seeded
/// RNG; each further pick maximises the minimum Euclidean distance to the
/// picks so far, ties going to the lowest index. Returns indices in pick order.
pub fn farthest_point_sample(cloud: &PointCloud, n: usize, seed: u64) -> Result<Vec<usize>> {
    let pts = cloud.positions();
    if n == 0 || n > pts.len() {
        return Err(Error::invalid(format!(
            "cannot sample {n} of {} points",
            pts.len()
        )));
    }
    let mut rng = seed::rng(seed);
    let first = rng.random_range(0..pts.len());
    let mut order = Vec::with_capacity(n);
    let mut min_d2 = vec![f64::INFINITY; pts.len()];
    let mut taken = vec![false; pts.len()];
    let mut current = first;
    loop {
        order.push(current);
        taken[current] = true;
        if order.len() == n {
            break;
        }
        let c = pts[current];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, p) in pts.iter().enumerate() {
            let d = dist2(p, &c);
            if d < min_d2[i] {
                min_d2[i] = d;
            }
            if !taken[i] && min_d2[i] > best_d {
                best_d = min_d2[i];
                best = i;
            }
        }
        current = best;
    }
    Ok(order)
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Points quantised onto a cubic lattice, one representative point per voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelCloud {
    /// Unique voxel indices in lexicographic order.
    pub coords: Vec<[i32; 3]>,
    pub colours: Option<Vec<[u8; 3]>>,
    pub labels: Option<Vec<ObjectId>>,
    /// For every input point, the row of the voxel it fell into.
    pub point_voxel: Vec<usize>,
    pub voxel_size: f64,
}

impl VoxelCloud {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Voxel centres in metres.
    pub fn centres(&self) -> Vec<[f64; 3]> {
        self.coords
            .iter()
            .map(|c| c.map(|v| (v as f64 + 0.5) * self.voxel_size))
            .collect()
    }

    /// Per-voxel input features: RGB scaled to `[0, 1]`, or constant-1
    /// occupancy when `colour` is false.
    pub fn features(&self, colour: bool) -> Result<Vec<Vec<f64>>> {
        if !colour {
            return Ok(vec![vec![1.0]; self.len()]);
        }
        let c = self
            .colours
            .as_ref()
            .ok_or_else(|| Error::Missing("colour features requested but cloud has no colours".into()))?;
        Ok(c.iter()
            .map(|rgb| rgb.iter().map(|&v| v as f64 / 255.0).collect())
            .collect())
    }

    /// Maps per-voxel values back to the original points.
    pub fn to_points<V: Copy>(&self, per_voxel: &[V]) -> Vec<V> {
        self.point_voxel.iter().map(|&v| per_voxel[v]).collect()
    }
}

fn voxel_index(p: &[f64; 3], voxel_size: f64) -> [i32; 3] {
    p.map(|v| (v / voxel_size).floor() as i32)
}

/// Quantises a cloud with `floor(coordinate / voxel_size)` per axis. When
/// several points share a voxel, the one supplying colour and label is drawn
/// uniformly at random. Candidates are put in a canonical order first, so the
/// result does not depend on input point order.
pub fn voxelise(cloud: &PointCloud, voxel_size: f64, seed: u64) -> Result<VoxelCloud> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::invalid(format!("voxel size {voxel_size} must be positive")));
    }
    let pts = cloud.positions();
    let mut groups: HashMap<[i32; 3], Vec<usize>> = HashMap::new();
    for (i, p) in pts.iter().enumerate() {
        groups.entry(voxel_index(p, voxel_size)).or_default().push(i);
    }
    let mut coords: Vec<[i32; 3]> = groups.keys().copied().collect();
    coords.sort_unstable();

    let colours = cloud.colours();
    let labels = cloud.labels();
    let key = |i: usize| {
        (
            pts[i].map(f64::to_bits),
            colours.map(|c| c[i]),
            labels.map(|l| l[i]),
        )
    };

    let mut rng = seed::rng(seed);
    let mut point_voxel = vec![0usize; pts.len()];
    let mut reps = Vec::with_capacity(coords.len());
    for (row, c) in coords.iter().enumerate() {
        let members = groups.get_mut(c).expect("voxel key");
        for &i in members.iter() {
            point_voxel[i] = row;
        }
        let pick = if members.len() == 1 {
            members[0]
        } else {
            members.sort_by_key(|&a| key(a));
            members[rng.random_range(0..members.len())]
        };
        reps.push(pick);
    }
    Ok(VoxelCloud {
        colours: colours.map(|c| reps.iter().map(|&i| c[i]).collect()),
        labels: labels.map(|l| reps.iter().map(|&i| l[i]).collect()),
        coords,
        point_voxel,
        voxel_size,
    })
}

/// Uniform sample of `n` points without replacement; original order kept.
pub fn random_subsample(cloud: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 || n > cloud.len() {
        return Err(Error::invalid(format!(
            "cannot subsample {n} of {} points",
            cloud.len()
        )));
    }
    let mut rng = seed::rng(seed);
    let mut picked = index::sample(&mut rng, cloud.len(), n).into_vec();
    picked.sort_unstable();
    cloud.select(&picked)
}

/// One of the four corners of the xy bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Corner {
    MinXMinY,
    MaxXMinY,
    MinXMaxY,
    MaxXMaxY,
}

impl Corner {
    pub const ALL: [Corner; 4] = [
        Corner::MinXMinY,
        Corner::MaxXMinY,
        Corner::MinXMaxY,
        Corner::MaxXMaxY,
    ];

    fn anchored_at_max(self) -> [bool; 2] {
        match self {
            Corner::MinXMinY => [false, false],
            Corner::MaxXMinY => [true, false],
            Corner::MinXMaxY => [false, true],
            Corner::MaxXMaxY => [true, true],
        }
    }
}

/// Whether each point lies inside the corner box spanning `ratio[a]` of the
/// xy extents. Inclusive on both the anchored side and the cut.
fn corner_mask(cloud: &PointCloud, ratio: [f64; 2], corner: Corner) -> Vec<bool> {
    let (lo, hi) = cloud.bounds();
    let at_max = corner.anchored_at_max();
    let mut limits = [(0.0, 0.0); 2];
    for a in 0..2 {
        let extent = hi[a] - lo[a];
        limits[a] = if at_max[a] {
            (hi[a] - ratio[a] * extent, f64::INFINITY)
        } else {
            (f64::NEG_INFINITY, lo[a] + ratio[a] * extent)
        };
    }
    cloud
        .positions()
        .iter()
        .map(|p| (0..2).all(|a| p[a] >= limits[a].0 && p[a] <= limits[a].1))
        .collect()
}

fn indices_where(mask: &[bool], keep: bool) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter(|(_, &m)| m == keep)
        .map(|(i, _)| i)
        .collect()
}

/// Keeps the points inside an axis-aligned box anchored at `corner` that spans
/// `crop_ratio` of the x and y extents and the full height.
pub fn crop_corner(cloud: &PointCloud, crop_ratio: f64, corner: Corner) -> Result<PointCloud> {
    if !(crop_ratio > 0.0 && crop_ratio <= 1.0) {
        return Err(Error::invalid(format!("crop ratio {crop_ratio} outside (0, 1]")));
    }
    if crop_ratio == 1.0 {
        return Ok(cloud.clone());
    }
    let keep = indices_where(&corner_mask(cloud, [crop_ratio; 2], corner), true);
    if keep.is_empty() {
        return Err(Error::Empty(format!("crop ratio {crop_ratio} leaves no points")));
    }
    cloud.select(&keep)
}

/// Drops every point labelled `object_class`.
pub fn remove_class(cloud: &PointCloud, object_class: ObjectId) -> Result<PointCloud> {
    let labels = cloud
        .labels()
        .ok_or_else(|| Error::Missing("class removal needs semantic labels".into()))?;
    let keep: Vec<usize> = (0..cloud.len()).filter(|&i| labels[i] != object_class).collect();
    if keep.is_empty() {
        return Err(Error::Empty(format!(
            "removing class {object_class} leaves no points"
        )));
    }
    if keep.len() == cloud.len() {
        return Ok(cloud.clone());
    }
    cloud.select(&keep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Half-width of the uniform translation per axis, metres.
    pub translation: [f64; 3],
    /// Uniform rotation over the full circle about the vertical axis.
    pub rotate: bool,
    /// Isotropic scale factor range.
    pub scale: [f64; 2],
    /// Gaussian coordinate noise, metres.
    pub jitter_sigma: f64,
    /// Fraction of points removed uniformly at random.
    pub drop_fraction: f64,
    /// Per-axis range of the fraction of the xy extent that survives the
    /// corner cutout; the removed corner box spans `1 - ratio` of each axis.
    pub cutout: [f64; 2],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            translation: [1.0, 1.0, 0.0],
            rotate: true,
            scale: [0.8, 1.25],
            jitter_sigma: 0.01,
            drop_fraction: 0.125,
            cutout: [0.7, 1.0],
        }
    }
}

impl AugmentConfig {
    /// Every stage degenerate: `augment` returns its input unchanged.
    pub fn identity() -> Self {
        Self {
            translation: [0.0; 3],
            rotate: false,
            scale: [1.0, 1.0],
            jitter_sigma: 0.0,
            drop_fraction: 0.0,
            cutout: [1.0, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("augment: {m}")));
        if self.translation.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return bad("translation ranges must be finite and non-negative");
        }
        if !(self.scale[0] > 0.0 && self.scale[1] >= self.scale[0] && self.scale[1].is_finite()) {
            return bad("scale range must be positive");
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return bad("jitter sigma must be non-negative");
        }
        if !(0.0..1.0).contains(&self.drop_fraction) {
            return bad("drop fraction must lie in [0, 1)");
        }
        if !(self.cutout[0] > 0.0 && self.cutout[1] >= self.cutout[0] && self.cutout[1] <= 1.0) {
            return bad("cutout ratios must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Rotates positions about the vertical axis through the origin.
pub fn rotate_z(positions: &[[f64; 3]], angle: f64) -> Vec<[f64; 3]> {
    let (s, c) = angle.sin_cos();
    positions
        .iter()
        .map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]])
        .collect()
}

fn draw(rng: &mut seed::Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

/// Translation, rotation about z, isotropic scaling, coordinate jitter,
/// random point dropout and a corner cutout, in that order. Colours and
/// labels follow their points.
pub fn augment(cloud: &PointCloud, cfg: &AugmentConfig, seed: u64) -> Result<PointCloud> {
    cfg.validate()?;
    let mut rng = seed::rng(seed);

    let t: [f64; 3] = std::array::from_fn(|a| draw(&mut rng, [-cfg.translation[a], cfg.translation[a]]));
    let mut pos: Vec<[f64; 3]> = cloud
        .positions()
        .iter()
        .map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]])
        .collect();

    if cfg.rotate {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        pos = rotate_z(&pos, angle);
    }

    let s = draw(&mut rng, cfg.scale);
    if s != 1.0 {
        for p in &mut pos {
            *p = p.map(|v| v * s);
        }
    }

    if cfg.jitter_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.jitter_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        for p in &mut pos {
            for v in p.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
    }
    let mut out = cloud.with_positions(pos)?;

    let drop = (cfg.drop_fraction * out.len() as f64).round() as usize;
    if drop > 0 {
        let keep = out.len() - drop;
        if keep == 0 {
            return Err(Error::Empty("dropout removed every point".into()));
        }
        let mut idx = index::sample(&mut rng, out.len(), keep).into_vec();
        idx.sort_unstable();
        out = out.select(&idx)?;
    }

    let ratio = [draw(&mut rng, cfg.cutout), draw(&mut rng, cfg.cutout)];
    let corner = Corner::ALL[rng.random_range(0..4)];
    if ratio.iter().any(|&r| r < 1.0) {
        // The removed box spans 1 - ratio of each axis from the chosen corner.
        let cut = corner_mask(&out, [1.0 - ratio[0], 1.0 - ratio[1]], corner);
        let keep = indices_where(&cut, false);
        if keep.is_empty() {
            return Err(Error::Empty("cutout removed every point".into()));
        }
        if keep.len() < out.len() {
            out = out.select(&keep)?;
        }
    }
    Ok(out)
}
