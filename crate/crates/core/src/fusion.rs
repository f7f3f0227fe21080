//! Cross-modal gating: six scalar gates computed from the deepest RGB and
//! depth features, and the gated assembly of the fusion encoder's inputs.

use crate::error::{Error, Result};
use crate::nn::blocks::{BatchNorm, Conv};
use crate::nn::graph::Graph;
use crate::nn::weights::Registry;
use crate::ops::conv::ConvGeometry;
use crate::ops::pool::PoolKind;
use crate::tape::Var;
use crate::tensor::{Scalar, Tensor};

/// Fusion stages gated per modality.
pub const GATE_STAGES: usize = 3;

/// Gate values for one image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateWeights {
    /// G1r, G2r, G3r.
    pub g_r: [f64; GATE_STAGES],
    /// G1d, G2d, G3d.
    pub g_d: [f64; GATE_STAGES],
}

impl GateWeights {
    pub fn uniform(v: f64) -> Self {
        Self {
            g_r: [v; GATE_STAGES],
            g_d: [v; GATE_STAGES],
        }
    }

    /// G1r, G2r, G3r, G1d, G2d, G3d.
    pub fn to_array(&self) -> [f64; 6] {
        [self.g_r[0], self.g_r[1], self.g_r[2], self.g_d[0], self.g_d[1], self.g_d[2]]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            g_r: [v[0], v[1], v[2]],
            g_d: [v[3], v[4], v[5]],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateMode {
    Learned,
    Forced(GateWeights),
}

impl GateMode {
    pub fn validate(&self) -> Result<()> {
        if let GateMode::Forced(w) = self {
            if let Some(bad) = w.to_array().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::argument(format!("forced gate value {bad} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Gate tensors: N×1×1×1 per stage and modality.
#[derive(Clone, Copy, Debug)]
pub struct GateVars {
    pub g_r: [Var; GATE_STAGES],
    pub g_d: [Var; GATE_STAGES],
}

impl GateVars {
    /// Gate values of every batch item.
    pub fn values<T: Scalar>(&self, g: &Graph<'_, T>) -> Vec<GateWeights> {
        let n = g.value(self.g_r[0]).len();
        (0..n)
            .map(|i| GateWeights {
                g_r: self.g_r.map(|v| g.value(v).data()[i].to_f64()),
                g_d: self.g_d.map(|v| g.value(v).data()[i].to_f64()),
            })
            .collect()
    }
}

/// Two independent conv-BN heads mapping Cat(s5_r, s5_d) to three channels
/// each, followed by sigmoid and spatial averaging.
#[derive(Clone, Debug)]
pub struct GateUnit {
    pub conv_r: Conv,
    pub bn_r: BatchNorm,
    pub conv_d: Conv,
    pub bn_d: BatchNorm,
}

impl GateUnit {
    pub fn new(name: &str, s5_channels: usize) -> Self {
        let conv = |m: &str| Conv {
            name: format!("{name}.{m}.conv"),
            in_channels: 2 * s5_channels,
            out_channels: GATE_STAGES,
            kernel: 1,
            geom: ConvGeometry::default(),
            bias: false,
        };
        let bn = |m: &str| BatchNorm {
            name: format!("{name}.{m}.bn"),
            channels: GATE_STAGES,
        };
        Self {
            conv_r: conv("rgb"),
            bn_r: bn("rgb"),
            conv_d: conv("depth"),
            bn_d: bn("depth"),
        }
    }

    pub fn declare(&self, reg: &mut Registry) {
        self.conv_r.declare(reg);
        self.bn_r.declare(reg);
        self.conv_d.declare(reg);
        self.bn_d.declare(reg);
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, s5_r: Var, s5_d: Var) -> Result<GateVars> {
        let [rn, _, rh, rw] = g.value(s5_r).dims4()?;
        let [dn, _, dh, dw] = g.value(s5_d).dims4()?;
        if (rn, rh, rw) != (dn, dh, dw) {
            return Err(Error::shape(format!(
                "gate inputs disagree: {:?} vs {:?}",
                g.value(s5_r).dims(),
                g.value(s5_d).dims()
            )));
        }
        let cat = g.tape.concat_channels(&[s5_r, s5_d])?;
        let g_r = self.head(g, cat, &self.conv_r, &self.bn_r)?;
        let g_d = self.head(g, cat, &self.conv_d, &self.bn_d)?;
        Ok(GateVars { g_r, g_d })
    }

    fn head<T: Scalar>(&self, g: &mut Graph<'_, T>, cat: Var, conv: &Conv, bn: &BatchNorm) -> Result<[Var; GATE_STAGES]> {
        let y = conv.forward(g, cat)?;
        let y = bn.forward(g, y)?;
        let y = g.tape.sigmoid(y);
        let pooled = g.tape.pool(y, PoolKind::GapSpatial)?;
        let mut out = [pooled; GATE_STAGES];
        for (k, o) in out.iter_mut().enumerate() {
            *o = g.tape.slice_channels(pooled, k, k + 1)?;
        }
        Ok(out)
    }
}

/// Constant gate tensors for a batch of `n`.
pub fn forced_gate_vars<T: Scalar>(g: &mut Graph<'_, T>, n: usize, w: &GateWeights) -> Result<GateVars> {
    GateMode::Forced(*w).validate()?;
    let mut mk = |v: f64| -> Result<Var> { Ok(g.input(Tensor::full(&[n, 1, 1, 1], T::from_f64(v))?)) };
    Ok(GateVars {
        g_r: [mk(w.g_r[0])?, mk(w.g_r[1])?, mk(w.g_r[2])?],
        g_d: [mk(w.g_d[0])?, mk(w.g_d[1])?, mk(w.g_d[2])?],
    })
}

/// `Cat(hybrid·1, rgb·gate_r, depth·gate_d)` for one fusion stage.
pub fn assemble_stage_input<T: Scalar>(
    g: &mut Graph<'_, T>,
    hybrid: Var,
    rgb: Var,
    depth: Var,
    gate_r: Var,
    gate_d: Var,
) -> Result<Var> {
    let [n, _, h, w] = g.value(hybrid).dims4()?;
    for (what, v) in [("rgb guidance", rgb), ("depth guidance", depth)] {
        let [vn, _, vh, vw] = g.value(v).dims4()?;
        if (vn, vh, vw) != (n, h, w) {
            return Err(Error::shape(format!(
                "{what} {:?} is not at the stride of hybrid feature {:?}",
                g.value(v).dims(),
                g.value(hybrid).dims()
            )));
        }
    }
    let r = g.tape.scale_batch(rgb, gate_r)?;
    let d = g.tape.scale_batch(depth, gate_d)?;
    g.tape.concat_channels(&[hybrid, r, d])
}

/// Guidance features entering the three fusion stages.
#[derive(Clone, Copy, Debug)]
pub struct Guidance {
    /// R, D (stride 4).
    pub stage1: (Var, Var),
    /// R3', D3' (stride 8).
    pub stage2: (Var, Var),
    /// R4', D4' (stride 16).
    pub stage3: (Var, Var),
}

/// All three stage inputs at once, given already-computed hybrid features
/// F2, F3, F4.
pub fn assemble_stage_inputs<T: Scalar>(
    g: &mut Graph<'_, T>,
    hybrid: [Var; 3],
    guidance: &Guidance,
    gates: &GateVars,
) -> Result<[Var; 3]> {
    let pairs = [guidance.stage1, guidance.stage2, guidance.stage3];
    let mut out = hybrid;
    for k in 0..3 {
        out[k] = assemble_stage_input(g, hybrid[k], pairs[k].0, pairs[k].1, gates.g_r[k], gates.g_d[k])?;
    }
    Ok(out)
}
