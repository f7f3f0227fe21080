//! Five-stage residual encoder with side outputs at strides 2..32.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::nn::blocks::Cbr;
use crate::nn::graph::Graph;
use crate::nn::weights::Registry;
use crate::ops::elementwise::Activation;
use crate::tape::Var;
use crate::tensor::Scalar;

/// Output stride of stages 1..=5 relative to the encoder's image input.
pub const STAGE_STRIDES: [usize; 5] = [2, 4, 8, 16, 32];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub stage_channels: [usize; 5],
    pub blocks_per_stage: [usize; 5],
    /// Channels fed to the first present stage.
    pub input_channels: usize,
    /// Stages removed from the front of the encoder (subset of {1, 2}).
    pub skip_stages: BTreeSet<usize>,
}

impl EncoderConfig {
    pub const TOY_CHANNELS: [usize; 5] = [8, 16, 32, 64, 64];

    pub fn toy(input_channels: usize) -> Self {
        Self {
            stage_channels: Self::TOY_CHANNELS,
            blocks_per_stage: [1; 5],
            input_channels,
            skip_stages: BTreeSet::new(),
        }
    }

    /// Encoder with stages 1 and 2 removed, consuming stride-4 features.
    pub fn without_early_stages(stage_channels: [usize; 5], blocks_per_stage: [usize; 5]) -> Self {
        Self {
            stage_channels,
            blocks_per_stage,
            input_channels: stage_channels[1],
            skip_stages: [1, 2].into_iter().collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.contains(&0) || self.blocks_per_stage.contains(&0) {
            return Err(Error::argument("stage widths and block counts must be positive"));
        }
        if self.input_channels == 0 {
            return Err(Error::argument("input channel count must be positive"));
        }
        if !self.skip_stages.iter().all(|s| *s == 1 || *s == 2) {
            return Err(Error::argument("only stages 1 and 2 can be skipped"));
        }
        if self.skip_stages.contains(&2) && !self.skip_stages.contains(&1) {
            return Err(Error::argument("skipping stage 2 requires skipping stage 1"));
        }
        Ok(())
    }

    pub fn first_stage(&self) -> usize {
        (1..=5).find(|s| !self.skip_stages.contains(s)).unwrap_or(5)
    }

    /// Width entering stage `k` (1-based).
    pub fn stage_input_channels(&self, k: usize) -> usize {
        if k == self.first_stage() {
            self.input_channels
        } else {
            self.stage_channels[k - 2]
        }
    }
}

/// Two 3×3 cbr layers plus an identity or 1×1 projection shortcut.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub conv1: Cbr,
    pub conv2: Cbr,
    pub shortcut: Option<Cbr>,
}

impl ResidualBlock {
    pub fn new(name: &str, cin: usize, cout: usize, stride: usize) -> Result<Self> {
        let shortcut = if stride != 1 || cin != cout {
            Some(Cbr::with_stride(
                &format!("{name}.proj"),
                cin,
                cout,
                1,
                1,
                stride,
                Activation::None,
            )?)
        } else {
            None
        };
        Ok(Self {
            conv1: Cbr::with_stride(&format!("{name}.conv1"), cin, cout, 3, 1, stride, Activation::Relu)?,
            conv2: Cbr::new(&format!("{name}.conv2"), cout, cout, 3, 1, Activation::None)?,
            shortcut,
        })
    }

    pub fn declare(&self, reg: &mut Registry) {
        self.conv1.declare(reg);
        self.conv2.declare(reg);
        if let Some(s) = &self.shortcut {
            s.declare(reg);
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let branch = self.conv1.forward(g, x)?;
        let branch = self.conv2.forward(g, branch)?;
        let skip = match &self.shortcut {
            Some(s) => s.forward(g, x)?,
            None => x,
        };
        let sum = g.tape.add(branch, skip)?;
        Ok(g.tape.relu(sum))
    }
}

/// Side outputs `s1..s5`; entries of skipped stages are `None`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SideOutputs {
    pub stages: [Option<Var>; 5],
}

impl SideOutputs {
    /// Side output of stage `k` (1-based).
    pub fn get(&self, k: usize) -> Option<Var> {
        self.stages.get(k.wrapping_sub(1)).copied().flatten()
    }

    pub fn set(&mut self, k: usize, v: Var) {
        self.stages[k - 1] = Some(v);
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    stages: Vec<Option<Vec<ResidualBlock>>>,
}

impl Encoder {
    pub fn new(name: &str, cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let mut stages = Vec::with_capacity(5);
        for k in 1..=5 {
            if cfg.skip_stages.contains(&k) {
                stages.push(None);
                continue;
            }
            let cout = cfg.stage_channels[k - 1];
            let mut cin = cfg.stage_input_channels(k);
            let mut blocks = Vec::new();
            for b in 0..cfg.blocks_per_stage[k - 1] {
                let stride = if b == 0 { 2 } else { 1 };
                blocks.push(ResidualBlock::new(&format!("{name}.s{k}.b{b}"), cin, cout, stride)?);
                cin = cout;
            }
            stages.push(Some(blocks));
        }
        Ok(Self { cfg, stages })
    }

    pub fn declare(&self, reg: &mut Registry) {
        for block in self.stages.iter().flatten().flatten() {
            block.declare(reg);
        }
    }

    /// Runs stage `k` (1-based) alone; it halves H and W.
    pub fn stage_forward<T: Scalar>(&self, g: &mut Graph<'_, T>, k: usize, x: Var) -> Result<Var> {
        let blocks = self
            .stages
            .get(k.wrapping_sub(1))
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::argument(format!("encoder has no stage {k}")))?;
        let [_, c, h, w] = g.value(x).dims4()?;
        if c != self.cfg.stage_input_channels(k) {
            return Err(Error::shape(format!(
                "stage {k} expects {} input channels, got {c}",
                self.cfg.stage_input_channels(k)
            )));
        }
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::geometry(format!("stage {k} input {h}×{w} is not even")));
        }
        let mut y = x;
        for block in blocks {
            y = block.forward(g, y)?;
        }
        Ok(y)
    }

    /// Runs every present stage in sequence. The input must be divisible by
    /// the total downsampling of the present stages, so that each side output
    /// is exactly input/stride.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<SideOutputs> {
        let [_, _, h, w] = g.value(x).dims4()?;
        let present = 5 - self.cfg.skip_stages.len();
        let divisor = 1usize << present;
        if h % divisor != 0 || w % divisor != 0 {
            return Err(Error::geometry(format!(
                "encoder input {h}×{w} must be a multiple of {divisor}"
            )));
        }
        let mut sides = SideOutputs::default();
        let mut y = x;
        for k in self.cfg.first_stage()..=5 {
            y = self.stage_forward(g, k, y)?;
            sides.set(k, y);
        }
        Ok(sides)
    }
}
