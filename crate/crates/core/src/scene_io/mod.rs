//! Scene data: point clouds, class taxonomies, the text scene format,
//! dataset manifests and the procedural scene generator.

mod format;
mod manifest;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use format::{load_scene, parse_scene, save_scene, write_scene};
pub use manifest::{DatasetManifest, Splits};
pub use synth::{generate_scene, generate_synthetic_dataset, SynthConfig};

/// Object-class id of a point.
pub type ObjectId = u16;

/// One scanned scene: positions in metres, optional RGB colours and
/// optional per-point object labels. All present arrays share one length.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    positions: Vec<[f64; 3]>,
    colours: Option<Vec<[u8; 3]>>,
    labels: Option<Vec<ObjectId>>,
}

impl PointCloud {
    pub fn new(
        positions: Vec<[f64; 3]>,
        colours: Option<Vec<[u8; 3]>>,
        labels: Option<Vec<ObjectId>>,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Empty("point cloud has no points".into()));
        }
        let n = positions.len();
        if let Some(c) = &colours {
            if c.len() != n {
                return Err(Error::shape(format!("{} colours for {n} points", c.len())));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::shape(format!("{} labels for {n} points", l.len())));
            }
        }
        if let Some(i) = positions.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid(format!("non-finite position at point {i}")));
        }
        Ok(Self {
            positions,
            colours,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    /// Always false for a constructed cloud; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn colours(&self) -> Option<&[[u8; 3]]> {
        self.colours.as_deref()
    }

    pub fn labels(&self) -> Option<&[ObjectId]> {
        self.labels.as_deref()
    }

    /// Checks every label against an object-class count.
    pub fn check_labels(&self, num_object_classes: usize) -> Result<()> {
        if let Some(labels) = &self.labels {
            if let Some((i, l)) = labels
                .iter()
                .enumerate()
                .find(|(_, &l)| l as usize >= num_object_classes)
            {
                return Err(Error::invalid(format!(
                    "label {l} at point {i} outside {num_object_classes} object classes"
                )));
            }
        }
        Ok(())
    }

    /// Gathers the given point indices, keeping all arrays consistent.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("selection is empty".into()));
        }
        Ok(Self {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            colours: self
                .colours
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        })
    }

    /// Same points with positions replaced; lengths must match.
    pub fn with_positions(&self, positions: Vec<[f64; 3]>) -> Result<Self> {
        if positions.len() != self.len() {
            return Err(Error::shape("position count changed"));
        }
        Self::new(positions, self.colours.clone(), self.labels.clone())
    }

    pub fn without_colours(&self) -> Self {
        Self {
            colours: None,
            ..self.clone()
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }
}

/// A point cloud with its scene-type label.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub cloud: PointCloud,
    pub scene_label: usize,
    pub scene_id: String,
}

/// Scene and object class names. Scene names must be single tokens because
/// they appear in scene file headers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub scene_classes: Vec<String>,
    pub eval_subset: Vec<String>,
    pub object_classes: Vec<String>,
}

pub const SCENE_CLASSES: [&str; 21] = [
    "apartment",
    "bathroom",
    "bedroom",
    "library",
    "classroom",
    "closet",
    "computer_cluster",
    "conference_room",
    "copy_room",
    "dining_room",
    "game_room",
    "gym",
    "hallway",
    "kitchen",
    "laundry_room",
    "living_room",
    "lobby",
    "misc",
    "office",
    "stairs",
    "storage",
];

pub const EVAL_SUBSET: [&str; 13] = [
    "apartment",
    "bathroom",
    "bedroom",
    "library",
    "conference_room",
    "copy_room",
    "hallway",
    "kitchen",
    "laundry_room",
    "living_room",
    "misc",
    "office",
    "storage",
];

pub const OBJECT_CLASSES: [&str; 20] = [
    "wall",
    "floor",
    "cabinet",
    "bed",
    "chair",
    "sofa",
    "table",
    "door",
    "window",
    "bookshelf",
    "picture",
    "counter",
    "desk",
    "curtain",
    "refrigerator",
    "shower_curtain",
    "toilet",
    "sink",
    "bathtub",
    "other_furniture",
];

impl Default for Taxonomy {
    fn default() -> Self {
        let own = |s: &[&str]| s.iter().map(|n| n.to_string()).collect();
        Self {
            scene_classes: own(&SCENE_CLASSES),
            eval_subset: own(&EVAL_SUBSET),
            object_classes: own(&OBJECT_CLASSES),
        }
    }
}

impl Taxonomy {
    pub fn validate(&self) -> Result<()> {
        fn unique(names: &[String], what: &str) -> Result<()> {
            let mut seen = std::collections::HashSet::new();
            for n in names {
                if n.is_empty() || n.contains(char::is_whitespace) {
                    return Err(Error::Config(format!("{what} name {n:?} is not a single token")));
                }
                if !seen.insert(n) {
                    return Err(Error::Config(format!("duplicate {what} name {n:?}")));
                }
            }
            Ok(())
        }
        unique(&self.scene_classes, "scene class")?;
        unique(&self.object_classes, "object class")?;
        unique(&self.eval_subset, "eval subset")?;
        if self.scene_classes.is_empty() || self.object_classes.is_empty() {
            return Err(Error::Config("taxonomy needs scene and object classes".into()));
        }
        for n in &self.eval_subset {
            if !self.scene_classes.contains(n) {
                return Err(Error::Config(format!(
                    "eval subset class {n:?} is not a scene class"
                )));
            }
        }
        Ok(())
    }

    pub fn num_scene_classes(&self) -> usize {
        self.scene_classes.len()
    }

    pub fn num_object_classes(&self) -> usize {
        self.object_classes.len()
    }

    pub fn scene_id(&self, name: &str) -> Option<usize> {
        self.scene_classes.iter().position(|n| n == name)
    }

    pub fn object_id(&self, name: &str) -> Option<ObjectId> {
        self.object_classes
            .iter()
            .position(|n| n == name)
            .map(|i| i as ObjectId)
    }

    /// Scene-class ids of the evaluation subset, in taxonomy order.
    pub fn eval_ids(&self) -> Vec<usize> {
        self.scene_classes
            .iter()
            .enumerate()
            .filter(|(_, n)| self.eval_subset.contains(n))
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_taxonomy_is_valid() {
        let t = Taxonomy::default();
        t.validate().unwrap();
        assert_eq!(t.num_scene_classes(), 21);
        assert_eq!(t.eval_ids().len(), 13);
        assert_eq!(t.num_object_classes(), 20);
        assert_eq!(t.object_id("bathtub"), Some(18));
    }

    #[test]
    fn taxonomy_rejects_foreign_eval_class() {
        let mut t = Taxonomy::default();
        t.eval_subset.push("spaceship".into());
        assert!(t.validate().is_err());
    }

    #[test]
    fn cloud_rejects_length_mismatch() {
        let err = PointCloud::new(vec![[0.0; 3]; 2], Some(vec![[0; 3]]), None);
        assert!(matches!(err, Err(Error::Shape(_))));
        assert!(PointCloud::new(vec![], None, None).is_err());
        assert!(PointCloud::new(vec![[f64::NAN, 0.0, 0.0]], None, None).is_err());
    }
}
