//! Convolution, batch-norm and the conv-BN-activation (`cbr`) primitive.

use crate::error::{Error, Result};
use crate::nn::graph::Graph;
use crate::nn::weights::{Init, Registry};
use crate::ops::batchnorm::BN_EPSILON;
use crate::ops::conv::ConvGeometry;
use crate::ops::elementwise::Activation;
use crate::tape::Var;
use crate::tensor::Scalar;

#[derive(Clone, Debug)]
pub struct Conv {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub geom: ConvGeometry,
    pub bias: bool,
}

impl Conv {
    pub fn declare(&self, reg: &mut Registry) {
        let fan_in = self.in_channels * self.kernel * self.kernel;
        reg.declare(
            format!("{}.weight", self.name),
            &[self.out_channels, self.in_channels, self.kernel, self.kernel],
            Init::FanInUniform { fan_in },
        );
        if self.bias {
            reg.declare(format!("{}.bias", self.name), &[self.out_channels], Init::Constant(0.0));
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let k = g.param(&format!("{}.weight", self.name))?;
        let b = if self.bias {
            Some(g.param(&format!("{}.bias", self.name))?)
        } else {
            None
        };
        g.tape.conv2d(x, k, b, self.geom)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub name: String,
    pub channels: usize,
}

impl BatchNorm {
    pub fn declare(&self, reg: &mut Registry) {
        let c = [self.channels];
        reg.declare(format!("{}.gamma", self.name), &c, Init::Constant(1.0));
        reg.declare(format!("{}.beta", self.name), &c, Init::Constant(0.0));
        reg.declare(format!("{}.running_mean", self.name), &c, Init::Constant(0.0));
        reg.declare(format!("{}.running_var", self.name), &c, Init::Constant(1.0));
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let gamma = g.param(&format!("{}.gamma", self.name))?;
        let beta = g.param(&format!("{}.beta", self.name))?;
        let rm = g.buffer(&format!("{}.running_mean", self.name))?;
        let rv = g.buffer(&format!("{}.running_var", self.name))?;
        let mode = g.mode();
        let (y, stats) = g.tape.batchnorm2d(x, gamma, beta, rm, rv, mode, BN_EPSILON)?;
        if let Some(stats) = stats {
            g.record_stats(&self.name, stats);
        }
        Ok(y)
    }
}

/// Convolution → batch norm → activation, without a convolution bias.
#[derive(Clone, Debug)]
pub struct Cbr {
    pub conv: Conv,
    pub bn: BatchNorm,
    pub act: Activation,
}

impl Cbr {
    /// Stride-1 block whose padding `dilation·(kernel−1)/2` preserves H×W.
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dilation: usize,
        act: Activation,
    ) -> Result<Self> {
        Self::with_stride(name, in_channels, out_channels, kernel, dilation, 1, act)
    }

    pub fn with_stride(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dilation: usize,
        stride: usize,
        act: Activation,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::argument(format!("cbr kernel must be odd, got {kernel}")));
        }
        if dilation == 0 || stride == 0 || in_channels == 0 || out_channels == 0 {
            return Err(Error::argument("cbr sizes must be positive"));
        }
        let same = ConvGeometry::same(kernel, dilation);
        Ok(Self {
            conv: Conv {
                name: format!("{name}.conv"),
                in_channels,
                out_channels,
                kernel,
                geom: ConvGeometry::new(stride, same.padding, dilation),
                bias: false,
            },
            bn: BatchNorm {
                name: format!("{name}.bn"),
                channels: out_channels,
            },
            act,
        })
    }

    pub fn padding(&self) -> usize {
        self.conv.geom.padding
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels
    }

    pub fn declare(&self, reg: &mut Registry) {
        self.conv.declare(reg);
        self.bn.declare(reg);
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let y = self.conv.forward(g, x)?;
        let y = self.bn.forward(g, y)?;
        Ok(g.tape.activation(y, self.act))
    }
}
