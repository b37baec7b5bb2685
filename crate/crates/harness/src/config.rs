use std::path::{Path, PathBuf};

use scenegrid_core::baselines::{Distance, ForestConfig};
use scenegrid_core::geometry::AugmentConfig;
use scenegrid_core::models::ModelConfig;
use scenegrid_core::scene_io::SynthConfig;
use scenegrid_core::seed;
use scenegrid_core::training::{Sampler, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory; the manifest is `manifest.toml` inside it.
    pub dir: PathBuf,
    pub synth: SynthConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub density_counts: Vec<usize>,
    pub density_sampler: Sampler,
    pub crop_ratios: Vec<f64>,
    /// Object classes removed one at a time; empty means every class.
    pub ablate_classes: Vec<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            density_counts: vec![32, 128, 512, 1024, 2048, 4096],
            density_sampler: Sampler::Fps,
            crop_ratios: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            ablate_classes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub distance: Distance,
    pub forest: ForestConfig,
}

/// One experiment: data, model, training, augmentation, sweeps and
/// baselines. Relative paths resolve against the config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Global seed; every component seed is derived from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Split evaluated by `eval`, sweeps, ablations and baselines.
    pub eval_split: String,
    pub augmentation: bool,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub sweep: SweepConfig,
    pub baseline: BaselineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            eval_split: "val".into(),
            augmentation: true,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            augment: AugmentConfig::default(),
            sweep: SweepConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Invalid(format!("config: {e}")))
    }

    /// Reads a config and rebases its relative paths on the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        for p in [&mut self.out_dir, &mut self.data.dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Sets the global seed and derives every component seed from it.
    pub fn resolve(mut self, seed_override: Option<u64>, out_override: Option<PathBuf>) -> Result<Self> {
        if let Some(s) = seed_override {
            self.seed = s;
        }
        if let Some(o) = out_override {
            self.out_dir = o;
        }
        self.data.synth.seed = seed::derive(self.seed, "synth");
        self.train.seed = seed::derive(self.seed, "train");
        self.baseline.forest.seed = seed::derive(self.seed, "forest");
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.synth.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.augment.validate()?;
        if !["train", "val", "test"].contains(&self.eval_split.as_str()) {
            return Err(CliError::Invalid(format!("unknown eval split {}", self.eval_split)));
        }
        if self.sweep.density_counts.contains(&0) {
            return Err(CliError::Invalid("density counts must be positive".into()));
        }
        if self.sweep.crop_ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return Err(CliError::Invalid("crop ratios must lie in (0, 1]".into()));
        }
        if self.baseline.forest.trees == 0 || self.baseline.forest.min_leaf == 0 {
            return Err(CliError::Invalid("forest trees and min_leaf must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Invalid(format!("config: {e}")))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.data.dir.join("manifest.toml")
    }

    pub fn augment_config(&self) -> Option<AugmentConfig> {
        self.augmentation.then(|| self.augment.clone())
    }
}
