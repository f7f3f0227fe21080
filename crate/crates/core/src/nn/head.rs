use crate::error::{Error, Result};
use crate::nn::blocks::Conv;
use crate::nn::graph::Graph;
use crate::nn::weights::Registry;
use crate::ops::conv::ConvGeometry;
use crate::tape::Var;
use crate::tensor::Scalar;

/// Stride of the features a head consumes.
pub const HEAD_STRIDE: usize = 4;

/// 1×1 convolution to one channel, ×4 bilinear upsampling, sigmoid.
#[derive(Clone, Debug)]
pub struct PredictionHead {
    pub conv: Conv,
}

impl PredictionHead {
    pub fn new(name: &str, in_channels: usize) -> Self {
        Self {
            conv: Conv {
                name: format!("{name}.conv"),
                in_channels,
                out_channels: 1,
                kernel: 1,
                geom: ConvGeometry::default(),
                bias: true,
            },
        }
    }

    pub fn declare(&self, reg: &mut Registry) {
        self.conv.declare(reg);
    }

    /// Pre-sigmoid logits at full resolution.
    pub fn logits<T: Scalar>(&self, g: &mut Graph<'_, T>, f: Var, target_hw: (usize, usize)) -> Result<Var> {
        let [_, _, h, w] = g.value(f).dims4()?;
        if (h * HEAD_STRIDE, w * HEAD_STRIDE) != target_hw {
            return Err(Error::geometry(format!(
                "head input {h}×{w} cannot produce a {}×{} map at stride {HEAD_STRIDE}",
                target_hw.0, target_hw.1
            )));
        }
        let y = self.conv.forward(g, f)?;
        g.tape.upsample_bilinear(y, HEAD_STRIDE)
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, f: Var, target_hw: (usize, usize)) -> Result<Var> {
        let logits = self.logits(g, f, target_hw)?;
        Ok(g.tape.sigmoid(logits))
    }
}
