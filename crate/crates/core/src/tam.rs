//! Type-based attention: five convolution branches of different receptive
//! fields, each rescaled by a scalar gate from its own small MLP, followed by
//! channel-pooled spatial attention and a residual output convolution.

use crate::error::{Error, Result};
use crate::nn::blocks::{Cbr, Conv};
use crate::nn::graph::Graph;
use crate::nn::weights::{Init, Registry};
use crate::ops::conv::ConvGeometry;
use crate::ops::elementwise::Activation;
use crate::ops::pool::PoolKind;
use crate::tape::Var;
use crate::tensor::{Scalar, Tensor};

pub const BRANCHES: usize = 5;
/// Dilations of the three dilated 3×3 branches.
pub const DILATIONS: [usize; 3] = [3, 5, 7];
pub const MLP_HIDDEN: usize = 4;

/// Gate source for the five branches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TamGates {
    Learned,
    /// Fixed per-branch gates; `[1.0; 5]` is the configuration without MLPs.
    Forced([f64; BRANCHES]),
}

/// Two-layer perceptron `width → 4 → 1` with ReLU hidden and sigmoid output.
#[derive(Clone, Debug)]
pub struct GateMlp {
    pub name: String,
    pub width: usize,
}

impl GateMlp {
    pub fn declare(&self, reg: &mut Registry) {
        let n = &self.name;
        reg.declare(format!("{n}.fc1.weight"), &[MLP_HIDDEN, self.width], Init::FanInUniform { fan_in: self.width });
        reg.declare(format!("{n}.fc1.bias"), &[MLP_HIDDEN], Init::Constant(0.0));
        reg.declare(format!("{n}.fc2.weight"), &[1, MLP_HIDDEN], Init::FanInUniform { fan_in: MLP_HIDDEN });
        reg.declare(format!("{n}.fc2.bias"), &[1], Init::Constant(0.0));
    }

    /// `pooled` is N×width; returns N×1 gates in (0, 1).
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, pooled: Var) -> Result<Var> {
        let n = &self.name;
        let w1 = g.param(&format!("{n}.fc1.weight"))?;
        let b1 = g.param(&format!("{n}.fc1.bias"))?;
        let w2 = g.param(&format!("{n}.fc2.weight"))?;
        let b2 = g.param(&format!("{n}.fc2.bias"))?;
        let h = g.tape.linear(pooled, w1, Some(b1))?;
        let h = g.tape.relu(h);
        let o = g.tape.linear(h, w2, Some(b2))?;
        Ok(g.tape.sigmoid(o))
    }
}

#[derive(Clone, Debug)]
pub struct Tam {
    pub width: usize,
    /// 1×1, 3×3, then 3×3 at dilations 3, 5, 7.
    pub branches: [Cbr; BRANCHES],
    pub mlps: [GateMlp; BRANCHES],
    pub fuse: Cbr,
    pub spatial: Conv,
    pub out: Cbr,
}

/// Every intermediate of one TAM pass.
#[derive(Clone, Copy, Debug)]
pub struct TamOutput {
    pub branches: [Var; BRANCHES],
    /// N×1 gate per branch.
    pub gates: [Var; BRANCHES],
    pub f_ta: Var,
    /// N×1×H×W spatial attention in (0, 1).
    pub attention: Var,
    pub f_sa: Var,
    /// Output convolution before its ReLU.
    pub output_pre: Var,
    pub output: Var,
}

impl Tam {
    pub fn new(name: &str, width: usize) -> Result<Self> {
        let b = |suffix: &str, k: usize, d: usize, act: Activation| {
            Cbr::new(&format!("{name}.{suffix}"), width, width, k, d, act)
        };
        let branches = [
            b("b1x1", 1, 1, Activation::Relu)?,
            b("b3x3", 3, 1, Activation::Relu)?,
            b("b3x3d3", 3, DILATIONS[0], Activation::Sigmoid)?,
            b("b3x3d5", 3, DILATIONS[1], Activation::Sigmoid)?,
            b("b3x3d7", 3, DILATIONS[2], Activation::Sigmoid)?,
        ];
        let mlps = std::array::from_fn(|i| GateMlp {
            name: format!("{name}.mlp{}", i + 1),
            width,
        });
        Ok(Self {
            width,
            branches,
            mlps,
            fuse: Cbr::new(&format!("{name}.fuse"), BRANCHES * width, width, 3, 1, Activation::Relu)?,
            spatial: Conv {
                name: format!("{name}.spatial"),
                in_channels: 2,
                out_channels: 1,
                kernel: 3,
                geom: ConvGeometry::same(3, 1),
                bias: true,
            },
            out: Cbr::new(&format!("{name}.out"), width, width, 3, 1, Activation::None)?,
        })
    }

    pub fn declare(&self, reg: &mut Registry) {
        for b in &self.branches {
            b.declare(reg);
        }
        for m in &self.mlps {
            m.declare(reg);
        }
        self.fuse.declare(reg);
        self.spatial.declare(reg);
        self.out.declare(reg);
    }

    fn check_width<T: Scalar>(&self, g: &Graph<'_, T>, x: Var) -> Result<()> {
        let [_, c, _, _] = g.value(x).dims4()?;
        if c != self.width {
            return Err(Error::shape(format!(
                "attention module expects {} channels, got {c}",
                self.width
            )));
        }
        Ok(())
    }

    pub fn branches<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<[Var; BRANCHES]> {
        self.check_width(g, x)?;
        let mut out = [x; BRANCHES];
        for (o, b) in out.iter_mut().zip(&self.branches) {
            *o = b.forward(g, x)?;
        }
        Ok(out)
    }

    /// Spatial mean → per-branch MLP → N×1 gate.
    pub fn gates<T: Scalar>(&self, g: &mut Graph<'_, T>, branches: &[Var; BRANCHES]) -> Result<[Var; BRANCHES]> {
        let mut out = *branches;
        for ((o, &f), mlp) in out.iter_mut().zip(branches).zip(&self.mlps) {
            self.check_width(g, f)?;
            let pooled = g.tape.pool(f, PoolKind::GapSpatial)?;
            let n = g.value(pooled).dims()[0];
            let flat = g.tape.reshape(pooled, &[n, self.width])?;
            *o = mlp.forward(g, flat)?;
        }
        Ok(out)
    }

    /// Constant N×1 gates.
    pub fn forced_gates<T: Scalar>(&self, g: &mut Graph<'_, T>, batch: usize, values: [f64; BRANCHES]) -> Result<[Var; BRANCHES]> {
        let mut out = [Var(0); BRANCHES];
        for (o, v) in out.iter_mut().zip(values) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::argument(format!("forced attention gate {v} outside [0, 1]")));
            }
            *o = g.input(Tensor::full(&[batch, 1], T::from_f64(v))?);
        }
        Ok(out)
    }

    /// Gate-weighted fusion, spatial attention and residual output.
    pub fn combine<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        branches: [Var; BRANCHES],
        gates: [Var; BRANCHES],
    ) -> Result<TamOutput> {
        let mut scaled = branches;
        for (s, (&f, &gate)) in scaled.iter_mut().zip(branches.iter().zip(&gates)) {
            *s = g.tape.scale_batch(f, gate)?;
        }
        let cat = g.tape.concat_channels(&scaled)?;
        let f_ta = self.fuse.forward(g, cat)?;
        let avg = g.tape.pool(f_ta, PoolKind::GapChannel)?;
        let max = g.tape.pool(f_ta, PoolKind::GmpChannel)?;
        let pooled = g.tape.concat_channels(&[avg, max])?;
        let logits = self.spatial.forward(g, pooled)?;
        let attention = g.tape.sigmoid(logits);
        let f_sa = g.tape.mul_planes(f_ta, attention)?;
        let residual = g.tape.add(x, f_sa)?;
        let output_pre = self.out.forward(g, residual)?;
        let output = g.tape.relu(output_pre);
        Ok(TamOutput {
            branches,
            gates,
            f_ta,
            attention,
            f_sa,
            output_pre,
            output,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, mode: TamGates) -> Result<TamOutput> {
        let branches = self.branches(g, x)?;
        let gates = match mode {
            TamGates::Learned => self.gates(g, &branches)?,
            TamGates::Forced(values) => {
                let n = g.value(x).dims()[0];
                self.forced_gates(g, n, values)?
            }
        };
        self.combine(g, x, branches, gates)
    }
}
