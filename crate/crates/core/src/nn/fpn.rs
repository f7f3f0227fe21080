//! Top-down feature pyramid decoder over strides 4..32.

use crate::error::{Error, Result};
use crate::nn::blocks::Cbr;
use crate::nn::encoder::SideOutputs;
use crate::nn::graph::Graph;
use crate::nn::weights::Registry;
use crate::ops::elementwise::Activation;
use crate::tape::Var;
use crate::tensor::Scalar;

pub const DEFAULT_WIDTH: usize = 64;

#[derive(Clone, Debug)]
pub struct Fpn {
    pub width: usize,
    /// 1×1 projections of s2..s5 to `width` channels.
    pub laterals: [Cbr; 4],
    pub merge4: Cbr,
    pub merge3: Cbr,
    pub merge2: Cbr,
}

/// Pyramid levels produced by [`Fpn::decode`].
#[derive(Clone, Copy, Debug)]
pub struct FpnOutput {
    /// Projected s5 (stride 32).
    pub top: Var,
    /// Stride 16.
    pub f4: Var,
    /// Stride 8.
    pub f3: Var,
    /// Conv-BN outputs of the stride-16 and stride-8 merges before their ReLU.
    pub f4_pre: Var,
    pub f3_pre: Var,
    /// Final stride-4 feature.
    pub f: Var,
}

impl Fpn {
    /// `side_channels` are the widths of s2..s5.
    pub fn new(name: &str, side_channels: [usize; 4], width: usize) -> Result<Self> {
        let lateral = |i: usize| {
            Cbr::new(&format!("{name}.lat{}", i + 2), side_channels[i], width, 1, 1, Activation::Relu)
        };
        Ok(Self {
            width,
            laterals: [lateral(0)?, lateral(1)?, lateral(2)?, lateral(3)?],
            merge4: Cbr::new(&format!("{name}.merge4"), width, width, 3, 1, Activation::None)?,
            merge3: Cbr::new(&format!("{name}.merge3"), width, width, 3, 1, Activation::None)?,
            merge2: Cbr::new(&format!("{name}.merge2"), width, width, 3, 1, Activation::Relu)?,
        })
    }

    pub fn declare(&self, reg: &mut Registry) {
        for l in &self.laterals {
            l.declare(reg);
        }
        self.merge4.declare(reg);
        self.merge3.declare(reg);
        self.merge2.declare(reg);
    }

    /// F4_fpn = C(F4 + U(F5)), F3_fpn = C(F3 + U(F4_fpn)), F = C(F2 + U(F3_fpn)).
    pub fn decode<T: Scalar>(&self, g: &mut Graph<'_, T>, sides: &SideOutputs) -> Result<FpnOutput> {
        let mut lat = [None; 4];
        for (i, slot) in lat.iter_mut().enumerate() {
            let s = sides
                .get(i + 2)
                .ok_or_else(|| Error::argument(format!("decoder needs side output s{}", i + 2)))?;
            *slot = Some(self.laterals[i].forward(g, s)?);
        }
        let [l2, l3, l4, l5] = lat.map(Option::unwrap);
        let f4_pre = self.merge(g, &self.merge4, l4, l5)?;
        let f4 = g.tape.relu(f4_pre);
        let f3_pre = self.merge(g, &self.merge3, l3, f4)?;
        let f3 = g.tape.relu(f3_pre);
        let f = self.merge(g, &self.merge2, l2, f3)?;
        Ok(FpnOutput {
            top: l5,
            f4,
            f3,
            f,
            f4_pre,
            f3_pre,
        })
    }

    fn merge<T: Scalar>(&self, g: &mut Graph<'_, T>, conv: &Cbr, lateral: Var, deeper: Var) -> Result<Var> {
        let up = g.tape.upsample_bilinear(deeper, 2)?;
        let sum = g.tape.add(lateral, up)?;
        conv.forward(g, sum)
    }
}
