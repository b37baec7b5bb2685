use super::batch::VoxelBatch;
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Conv, Linear, ParamStore, Tape, Var};
use crate::real::Real;
use crate::seed::Rng;

#[derive(Clone, Debug)]
struct Block {
    conv1: Conv,
    bn1: BatchNorm,
    conv2: Conv,
    bn2: BatchNorm,
    /// Strided projection for blocks that change resolution and width.
    shortcut: Option<(Conv, BatchNorm)>,
}

impl Block {
    fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        down: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if !down && c_in != c_out {
            return Err(Error::shape(format!("{name}: width change without downsampling")));
        }
        let shortcut = if down {
            Some((
                Conv::new(store, &format!("{name}.proj"), 1, c_in, c_out, rng)?,
                BatchNorm::new(store, &format!("{name}.proj_bn"), c_out)?,
            ))
        } else {
            None
        };
        Ok(Self {
            conv1: Conv::new(store, &format!("{name}.conv1"), 3, c_in, c_out, rng)?,
            bn1: BatchNorm::new(store, &format!("{name}.bn1"), c_out)?,
            conv2: Conv::new(store, &format!("{name}.conv2"), 3, c_out, c_out, rng)?,
            bn2: BatchNorm::new(store, &format!("{name}.bn2"), c_out)?,
            shortcut,
        })
    }

    /// Runs the block producing level `level`; `down` blocks read level
    /// `level - 1`.
    fn forward<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        batch: &VoxelBatch<T>,
        x: Var,
        level: usize,
        train: bool,
    ) -> Result<Var> {
        let down = self.shortcut.is_some();
        let lat = &batch.lattice;
        let map1 = if down { &lat.down3[level - 1] } else { &lat.sub3[level] };
        let h = self.conv1.forward(tape, x, map1)?;
        let h = self.bn1.forward(tape, h, train)?;
        let h = tape.relu(h);
        let h = self.conv2.forward(tape, h, &lat.sub3[level])?;
        let h = self.bn2.forward(tape, h, train)?;
        let skip = match &self.shortcut {
            Some((conv, bn)) => {
                let s = conv.forward(tape, x, &lat.down1[level - 1])?;
                bn.forward(tape, s, train)?
            }
            None => x,
        };
        let sum = tape.add(h, skip)?;
        Ok(tape.relu(sum))
    }
}

/// Sparse residual encoder: a kernel-3 stem followed by four stages whose
/// first block (from the second stage on) halves the resolution.
#[derive(Clone, Debug)]
pub struct Encoder {
    stem: Conv,
    stem_bn: BatchNorm,
    stages: Vec<Vec<Block>>,
}

impl Encoder {
    pub fn new<T: Real>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let w = &cfg.widths;
        let stem = Conv::new(store, "encoder.stem", 3, cfg.in_channels(), w[0], rng)?;
        let stem_bn = BatchNorm::new(store, "encoder.stem_bn", w[0])?;
        let mut stages = Vec::with_capacity(w.len());
        let mut c_in = w[0];
        for (s, (&width, &n)) in w.iter().zip(&cfg.blocks).enumerate() {
            let mut blocks = Vec::with_capacity(n);
            for b in 0..n {
                let down = s > 0 && b == 0;
                blocks.push(Block::new(store, &format!("encoder.s{s}.b{b}"), c_in, width, down, rng)?);
                c_in = width;
            }
            stages.push(blocks);
        }
        Ok(Self {
            stem,
            stem_bn,
            stages,
        })
    }

    /// Output of every stage, at strides 1, 2, 4, 8.
    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, batch: &VoxelBatch<T>, train: bool) -> Result<Vec<Var>> {
        if batch.lattice.levels.len() != self.stages.len() {
            return Err(Error::shape(format!(
                "batch has {} lattice levels, encoder needs {}",
                batch.lattice.levels.len(),
                self.stages.len()
            )));
        }
        let x = tape.input(batch.features.clone());
        let h = self.stem.forward(tape, x, &batch.lattice.sub3[0])?;
        let h = self.stem_bn.forward(tape, h, train)?;
        let mut h = tape.relu(h);
        let mut outs = Vec::with_capacity(self.stages.len());
        for (s, blocks) in self.stages.iter().enumerate() {
            for block in blocks {
                h = block.forward(tape, batch, h, s, train)?;
            }
            outs.push(h);
        }
        Ok(outs)
    }

    /// Global average of the deepest stage per scene.
    pub fn latent<T: Real>(&self, tape: &mut Tape<'_, T>, batch: &VoxelBatch<T>, stages: &[Var]) -> Result<Var> {
        let last = stages.len() - 1;
        tape.avg_pool(stages[last], &batch.segments[last], batch.batch_size())
    }
}

/// `linear → relu → linear` from the latent code to scene logits.
#[derive(Clone, Debug)]
pub struct Head {
    fc1: Linear,
    fc2: Linear,
}

impl Head {
    pub fn new<T: Real>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let latent = *cfg.widths.last().expect("validated widths");
        Ok(Self {
            fc1: Linear::new(store, "head.fc1", latent, cfg.head_hidden, rng)?,
            fc2: Linear::new(store, "head.fc2", cfg.head_hidden, cfg.num_scene_classes, rng)?,
        })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, z: Var) -> Result<Var> {
        let h = self.fc1.forward(tape, z)?;
        let h = tape.relu(h);
        self.fc2.forward(tape, h)
    }
}

#[derive(Clone, Debug)]
struct UpStage {
    up: Conv,
    up_bn: BatchNorm,
    convs: Vec<(Conv, BatchNorm)>,
}

/// Mirror of the encoder: each stage upsamples with a transposed stride-2
/// convolution, concatenates the same-stride encoder output (doubling the
/// width) and applies two submanifold conv-BN-ReLU blocks. A final 1×1
/// layer produces object logits at input resolution.
#[derive(Clone, Debug)]
pub struct Decoder {
    /// Ordered coarse to fine: stage `i` produces level `levels - 2 - i`.
    stages: Vec<UpStage>,
    classifier: Linear,
}

impl Decoder {
    pub fn new<T: Real>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let w = &cfg.widths;
        let mut c_in = w[w.len() - 1];
        let mut stages = Vec::new();
        for level in (0..w.len() - 1).rev() {
            let name = format!("decoder.l{level}");
            let up = Conv::new(store, &format!("{name}.up"), 3, c_in, w[level], rng)?;
            let up_bn = BatchNorm::new(store, &format!("{name}.up_bn"), w[level])?;
            let width = 2 * w[level];
            let convs = (0..2)
                .map(|i| {
                    Ok((
                        Conv::new(store, &format!("{name}.conv{i}"), 3, width, width, rng)?,
                        BatchNorm::new(store, &format!("{name}.bn{i}"), width)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            stages.push(UpStage { up, up_bn, convs });
            c_in = width;
        }
        let classifier = Linear::new(store, "decoder.classifier", c_in, cfg.num_object_classes, rng)?;
        Ok(Self { stages, classifier })
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        batch: &VoxelBatch<T>,
        encoder_stages: &[Var],
        train: bool,
    ) -> Result<Var> {
        if encoder_stages.len() != self.stages.len() + 1 {
            return Err(Error::Missing(format!(
                "decoder needs {} cached encoder stages, got {}",
                self.stages.len() + 1,
                encoder_stages.len()
            )));
        }
        let lat = &batch.lattice;
        let mut h = encoder_stages[self.stages.len()];
        for (i, stage) in self.stages.iter().enumerate() {
            let level = self.stages.len() - 1 - i;
            let u = stage.up.forward(tape, h, &lat.up3[level])?;
            let u = stage.up_bn.forward(tape, u, train)?;
            let u = tape.relu(u);
            h = tape.concat(encoder_stages[level], u)?;
            for (conv, bn) in &stage.convs {
                let c = conv.forward(tape, h, &lat.sub3[level])?;
                let c = bn.forward(tape, c, train)?;
                h = tape.relu(c);
            }
        }
        self.classifier.forward(tape, h)
    }
}
