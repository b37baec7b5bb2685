//! Sparse tensors on integer lattices, sparse convolution kernels and a
//! reverse-mode differentiation tape.

pub mod coords;
pub mod gradcheck;
pub mod kernels;
pub mod layers;
pub mod matrix;
pub mod params;
pub mod tape;

use std::sync::Arc;

pub use coords::{build_cell_map, build_kernel_map, kernel_offsets, Coord, CoordSet, KernelMap, Lattice};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use layers::{BatchNorm, Conv, Linear};
pub use matrix::Matrix;
pub use params::{Gradients, ParamId, ParamStore, Parameter, StatsUpdate};
pub use tape::{Tape, Var, BN_EPS};

/// Features recorded on a tape together with the coordinates they live on.
#[derive(Clone, Debug)]
pub struct SparseTensor {
    pub coords: Arc<CoordSet>,
    pub features: Var,
}

impl SparseTensor {
    pub fn new(coords: Arc<CoordSet>, features: Var) -> Self {
        Self { coords, features }
    }
}
