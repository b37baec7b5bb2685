//! Network definitions: a sparse ResNet14 encoder with a scene-classification
//! head, an optional U-Net decoder for per-voxel object logits, and a vanilla
//! PointNet classifier.

mod batch;
mod pointnet;
mod resnet;

use serde::{Deserialize, Serialize};

pub use batch::{PointBatch, VoxelBatch};
pub use pointnet::PointNet;
pub use resnet::{Decoder, Encoder, Head};

use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore, Tape, Var};
use crate::real::Real;
use crate::scene_io::{OBJECT_CLASSES, SCENE_CLASSES};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Resnet14,
    Resnet14Multitask,
    Pointnet,
}

impl Variant {
    pub fn is_voxel(self) -> bool {
        !matches!(self, Variant::Pointnet)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// RGB input features; otherwise constant-1 occupancy (voxel models) or
    /// xyz only (PointNet).
    pub colour: bool,
    /// Encoder width per stage.
    pub widths: Vec<usize>,
    /// Residual blocks per stage.
    pub blocks: Vec<usize>,
    pub head_hidden: usize,
    pub num_scene_classes: usize,
    pub num_object_classes: usize,
    /// Voxel edge length in metres.
    pub voxel_size: f64,
    /// Points per scene fed to PointNet.
    pub num_points: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Resnet14,
            colour: true,
            widths: vec![32, 64, 128, 256],
            blocks: vec![2, 2, 1, 1],
            head_hidden: 128,
            num_scene_classes: SCENE_CLASSES.len(),
            num_object_classes: OBJECT_CLASSES.len(),
            voxel_size: 0.1,
            num_points: 4096,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.widths.len() != 4 || self.blocks.len() != 4 {
            return bad(format!(
                "model needs 4 stage widths and block counts, got {:?} / {:?}",
                self.widths, self.blocks
            ));
        }
        if self.widths.iter().chain(&self.blocks).any(|&w| w == 0) || self.head_hidden == 0 {
            return bad("widths, block counts and head width must be positive".into());
        }
        if self.num_scene_classes == 0 || self.num_object_classes == 0 {
            return bad("class counts must be positive".into());
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return bad(format!("voxel_size {} must be positive", self.voxel_size));
        }
        if self.num_points == 0 {
            return bad("num_points must be positive".into());
        }
        Ok(())
    }

    /// Input feature channels.
    pub fn in_channels(&self) -> usize {
        match (self.variant, self.colour) {
            (Variant::Pointnet, true) => 6,
            (Variant::Pointnet, false) => 3,
            (_, true) => 3,
            (_, false) => 1,
        }
    }

    /// Weighted layers on the classification path: stem, two convs per
    /// block and the final head linear.
    pub fn weighted_layers(&self) -> usize {
        match self.variant {
            Variant::Pointnet => 6,
            _ => 1 + 2 * self.blocks.iter().sum::<usize>() + 1,
        }
    }
}

/// Which part of a model a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    Encoder,
    Decoder,
    Head,
}

#[derive(Clone, Debug)]
enum Arch {
    Voxel {
        encoder: Encoder,
        head: Head,
        decoder: Option<Decoder>,
    },
    Points(PointNet),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwardMode {
    /// Batch-norm layers of the encoder and decoder use batch statistics.
    pub train: bool,
    pub classify: bool,
    pub segment: bool,
    /// Cut gradient flow from the head into the encoder.
    pub detach_latent: bool,
}

impl ForwardMode {
    pub const EVAL: Self = Self {
        train: false,
        classify: true,
        segment: false,
        detach_latent: false,
    };

    pub fn train() -> Self {
        Self {
            train: true,
            ..Self::EVAL
        }
    }
}

pub enum Input<'a, T> {
    Voxels(&'a VoxelBatch<T>),
    Points(&'a PointBatch<T>),
}

/// Tape handles produced by a forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Outputs {
    pub latent: Var,
    /// `B × classes` scene logits.
    pub scores: Option<Var>,
    /// Per-voxel object logits, rows aligned with the batch's voxels.
    pub point_logits: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    arch: Arch,
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed::derive(seed, "model/init"));
        let mut params = ParamStore::new();
        let arch = match config.variant {
            Variant::Pointnet => Arch::Points(PointNet::new(&mut params, &config, &mut rng)?),
            v => {
                let encoder = Encoder::new(&mut params, &config, &mut rng)?;
                let decoder = match v {
                    Variant::Resnet14Multitask => Some(Decoder::new(&mut params, &config, &mut rng)?),
                    _ => None,
                };
                let head = Head::new(&mut params, &config, &mut rng)?;
                Arch::Voxel {
                    encoder,
                    head,
                    decoder,
                }
            }
        };
        Ok(Self {
            config,
            params,
            arch,
        })
    }

    /// The same model with parameters converted to `f64`.
    pub fn to_f64(&self) -> Model<f64> {
        Model {
            config: self.config.clone(),
            params: self.params.to_f64(),
            arch: self.arch.clone(),
        }
    }

    pub fn group(&self, id: ParamId) -> Group {
        let name = &self.params.get(id).name;
        if name.starts_with("decoder.") {
            Group::Decoder
        } else if name.starts_with("head.") {
            Group::Head
        } else {
            Group::Encoder
        }
    }

    pub fn has_decoder(&self) -> bool {
        matches!(self.arch, Arch::Voxel { decoder: Some(_), .. })
    }

    /// Number of lattice levels the voxel encoder consumes.
    pub fn levels(&self) -> usize {
        self.config.widths.len()
    }

    pub fn forward(&self, tape: &mut Tape<'_, T>, input: Input<'_, T>, mode: ForwardMode) -> Result<Outputs> {
        match (&self.arch, input) {
            (
                Arch::Voxel {
                    encoder,
                    head,
                    decoder,
                },
                Input::Voxels(batch),
            ) => {
                let stages = encoder.forward(tape, batch, mode.train)?;
                let latent = encoder.latent(tape, batch, &stages)?;
                let scores = if mode.classify {
                    let z = if mode.detach_latent { tape.detach(latent) } else { latent };
                    Some(head.forward(tape, z)?)
                } else {
                    None
                };
                let point_logits = match (mode.segment, decoder) {
                    (true, Some(d)) => Some(d.forward(tape, batch, &stages, mode.train)?),
                    (true, None) => return Err(Error::invalid("model has no segmentation decoder")),
                    (false, _) => None,
                };
                Ok(Outputs {
                    latent,
                    scores,
                    point_logits,
                })
            }
            (Arch::Points(net), Input::Points(batch)) => {
                if mode.segment {
                    return Err(Error::invalid("PointNet has no segmentation branch"));
                }
                let (latent, scores) = net.forward(tape, batch, mode.train)?;
                Ok(Outputs {
                    latent,
                    scores: Some(scores),
                    point_logits: None,
                })
            }
            _ => Err(Error::invalid("input kind does not match the model variant")),
        }
    }
}

#[cfg(test)]
mod tests;
