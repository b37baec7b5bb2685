//! Parameter bundles for the layer types the models are assembled from.

use std::sync::Arc;

use super::coords::KernelMap;
use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::Result;
use crate::real::Real;
use crate::seed::Rng;

/// Sparse convolution weights, `offsets × C_in × C_out`, no bias.
#[derive(Clone, Copy, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub c_in: usize,
    pub c_out: usize,
}

impl Conv {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        kernel_size: usize,
        c_in: usize,
        c_out: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let k = kernel_size.pow(3);
        let weight = store.add_he(format!("{name}.weight"), &[k, c_in, c_out], k * c_in, rng)?;
        Ok(Self { weight, c_in, c_out })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var, map: &Arc<KernelMap>) -> Result<Var> {
        tape.conv(x, self.weight, map)
    }
}

/// Affine batch normalisation with running statistics.
#[derive(Clone, Copy, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.add_const(format!("{name}.gamma"), &[channels], 1.0, true)?,
            beta: store.add_const(format!("{name}.beta"), &[channels], 0.0, true)?,
            running_mean: store.add_const(format!("{name}.running_mean"), &[channels], 0.0, false)?,
            running_var: store.add_const(format!("{name}.running_var"), &[channels], 1.0, false)?,
        })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var, train: bool) -> Result<Var> {
        tape.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var, train)
    }
}

/// Fully connected layer, `W: in × out` plus bias.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.add_he(format!("{name}.weight"), &[c_in, c_out], c_in, rng)?,
            bias: store.add_const(format!("{name}.bias"), &[c_out], 0.0, true)?,
        })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        tape.linear(x, self.weight, Some(self.bias))
    }
}
