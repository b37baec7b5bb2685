//! Sparse voxel networks for 3D indoor scene recognition: scene I/O and a
//! procedural scene generator, point-cloud preprocessing, a sparse
//! convolution engine with reverse-mode differentiation, the ResNet14 /
//! multi-task U-Net / PointNet models, training, geometry-free baselines and
//! scene-level metrics.

pub mod baselines;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod real;
pub mod scene_io;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
pub use real::Real;
