use super::batch::PointBatch;
use super::ModelConfig;
use crate::error::Result;
use crate::nn::{BatchNorm, Linear, ParamStore, Tape, Var};
use crate::real::Real;
use crate::seed::Rng;

const SHARED: [usize; 3] = [64, 128, 1024];
const HEAD: [usize; 2] = [512, 256];

/// Shared per-point MLP, global max pool, then an MLP to scene logits.
#[derive(Clone, Debug)]
pub struct PointNet {
    shared: Vec<(Linear, BatchNorm)>,
    head: Vec<Linear>,
}

impl PointNet {
    pub fn new<T: Real>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let mut c = cfg.in_channels();
        let mut shared = Vec::new();
        for (i, &w) in SHARED.iter().enumerate() {
            shared.push((
                Linear::new(store, &format!("encoder.mlp{i}"), c, w, rng)?,
                BatchNorm::new(store, &format!("encoder.mlp{i}_bn"), w)?,
            ));
            c = w;
        }
        let mut head = Vec::new();
        for (i, &w) in HEAD.iter().chain(&[cfg.num_scene_classes]).enumerate() {
            head.push(Linear::new(store, &format!("head.fc{i}"), c, w, rng)?);
            c = w;
        }
        Ok(Self { shared, head })
    }

    /// Returns the pooled global feature and the scene logits.
    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, batch: &PointBatch<T>, train: bool) -> Result<(Var, Var)> {
        let mut h = tape.input(batch.features.clone());
        for (lin, bn) in &self.shared {
            let a = lin.forward(tape, h)?;
            let a = bn.forward(tape, a, train)?;
            h = tape.relu(a);
        }
        let latent = tape.max_pool(h, &batch.segment, batch.batch_size())?;
        let mut h = latent;
        for (i, lin) in self.head.iter().enumerate() {
            h = lin.forward(tape, h)?;
            if i + 1 < self.head.len() {
                h = tape.relu(h);
            }
        }
        Ok((latent, h))
    }
}
