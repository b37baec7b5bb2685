use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{load_scene, SceneSample, Taxonomy};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    #[serde(default)]
    pub train: Vec<PathBuf>,
    #[serde(default)]
    pub val: Vec<PathBuf>,
    #[serde(default)]
    pub test: Vec<PathBuf>,
}

/// Train/val/test lists of scene files, stored as TOML next to the scenes.
/// Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub taxonomy: Taxonomy,
    pub splits: Splits,
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        self.taxonomy.validate()?;
        let mut seen = HashSet::new();
        for (name, list) in self.split_lists() {
            for p in list {
                if !seen.insert(p) {
                    return Err(Error::Config(format!(
                        "{} listed twice (again in split {name})",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    fn split_lists(&self) -> [(&'static str, &Vec<PathBuf>); 3] {
        [
            ("train", &self.splits.train),
            ("val", &self.splits.val),
            ("test", &self.splits.test),
        ]
    }

    pub fn split(&self, name: &str) -> Result<&[PathBuf]> {
        self.split_lists()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, l)| l.as_slice())
            .ok_or_else(|| Error::invalid(format!("unknown split {name:?}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        for (_, list) in m.split_lists() {
            for p in list {
                let full = m.root.join(p);
                if !full.is_file() {
                    return Err(Error::Missing(format!(
                        "scene file {} not found",
                        full.display()
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let text =
            toml::to_string(self).map_err(|e| Error::Config(format!("manifest encode: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads every scene of a split (in parallel, order preserved).
    pub fn load_split(&self, name: &str) -> Result<Vec<SceneSample>> {
        let taxonomy = &self.taxonomy;
        self.split(name)?
            .par_iter()
            .map(|p| load_scene(&self.root.join(p), taxonomy))
            .collect()
    }
}
