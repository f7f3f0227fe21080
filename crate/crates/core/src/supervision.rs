//! BCE + IoU supervision of the three saliency outputs.

use crate::error::Result;
use crate::model::ResinResOutput;
use crate::nn::graph::Graph;
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// Loss values of one pass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub bce_r: f64,
    pub iou_r: f64,
    pub bce_d: f64,
    pub iou_d: f64,
    pub bce_f: f64,
    pub iou_f: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn components(&self) -> [f64; 6] {
        [self.bce_r, self.iou_r, self.bce_d, self.iou_d, self.bce_f, self.iou_f]
    }
}

/// Mean binary cross-entropy of `p` against `g` (same dims), log-clamped.
pub fn bce_loss<T: Scalar>(p: &Tensor<T>, g: &Tensor<T>) -> Result<f64> {
    let mut tape = Tape::inference();
    let pv = tape.constant(p.clone());
    let l = tape.bce(pv, g)?;
    Ok(tape.value(l).data()[0].to_f64())
}

/// Soft IoU loss; 0 when both maps are empty.
pub fn iou_loss<T: Scalar>(p: &Tensor<T>, g: &Tensor<T>) -> Result<f64> {
    let mut tape = Tape::inference();
    let pv = tape.constant(p.clone());
    let l = tape.iou(pv, g)?;
    Ok(tape.value(l).data()[0].to_f64())
}

/// Sum of BCE and IoU on all three outputs, each against the same `gt`.
/// Returns the differentiable total and its breakdown.
pub fn total_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    out: &ResinResOutput,
    gt: &Tensor<T>,
) -> Result<(Var, LossBreakdown)> {
    let mut terms = Vec::with_capacity(6);
    for p in [out.sal_r, out.sal_d, out.sal_f] {
        terms.push(g.tape.bce(p, gt)?);
        terms.push(g.tape.iou(p, gt)?);
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.tape.add(total, t)?;
    }
    let v = |x: Var| g.value(x).data()[0].to_f64();
    let breakdown = LossBreakdown {
        bce_r: v(terms[0]),
        iou_r: v(terms[1]),
        bce_d: v(terms[2]),
        iou_d: v(terms[3]),
        bce_f: v(terms[4]),
        iou_f: v(terms[5]),
        total: v(total),
    };
    Ok((total, breakdown))
}
