//! Pixel losses recorded on the tape: mean binary cross-entropy and the
//! soft IoU loss, both against a constant target map.

use crate::error::{Error, Result};
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// Probability clamp keeping `ln` finite at saturated predictions.
pub const BCE_EPS: f64 = 1e-7;

fn check_dims<T: Scalar>(p: &Tensor<T>, g: &Tensor<T>) -> Result<()> {
    if p.dims() != g.dims() {
        return Err(Error::shape(format!(
            "prediction {:?} and target {:?} differ",
            p.dims(),
            g.dims()
        )));
    }
    Ok(())
}

/// Mean over all elements of `−[g·ln p + (1−g)·ln(1−p)]` with p clamped to `[eps, 1−eps]`.
pub fn bce_value<T: Scalar>(p: &[T], g: &[T], eps: T) -> T {
    let hi = T::ONE - eps;
    let total: T = p
        .iter()
        .zip(g)
        .map(|(&pv, &gv)| {
            let pc = pv.max(eps).min(hi);
            -(gv * pc.ln() + (T::ONE - gv) * (T::ONE - pc).ln())
        })
        .sum();
    total / T::from_f64(p.len() as f64)
}

/// `(Σ g·p, Σ (p + g − g·p))` for one item.
fn iou_terms<T: Scalar>(p: &[T], g: &[T]) -> (T, T) {
    let mut inter = T::ZERO;
    let mut union = T::ZERO;
    for (&pv, &gv) in p.iter().zip(g) {
        inter += gv * pv;
        union += pv + gv - gv * pv;
    }
    (inter, union)
}

/// `1 − Σgp / Σ(p+g−gp)` for one item; 0 when both maps are empty.
pub fn iou_value<T: Scalar>(p: &[T], g: &[T]) -> T {
    let (inter, union) = iou_terms(p, g);
    if union == T::ZERO {
        T::ZERO
    } else {
        T::ONE - inter / union
    }
}

fn batch_len<T: Scalar>(p: &Tensor<T>) -> usize {
    p.len() / p.dims()[0]
}

impl<T: Scalar> Tape<T> {
    pub fn bce(&mut self, p: Var, target: &Tensor<T>) -> Result<Var> {
        check_dims(self.value(p), target)?;
        let eps = T::from_f64(BCE_EPS);
        let value = Tensor::scalar(bce_value(self.value(p).data(), target.data(), eps));
        Ok(self.push(
            value,
            Op::Bce {
                p,
                target: target.clone(),
                eps,
            },
        ))
    }

    /// IoU loss per batch item, averaged over the batch.
    pub fn iou(&mut self, p: Var, target: &Tensor<T>) -> Result<Var> {
        check_dims(self.value(p), target)?;
        let pv = self.value(p);
        let item = batch_len(pv);
        let n = pv.dims()[0];
        let total: T = pv
            .data()
            .chunks(item)
            .zip(target.data().chunks(item))
            .map(|(a, b)| iou_value(a, b))
            .sum();
        let value = Tensor::scalar(total / T::from_f64(n as f64));
        Ok(self.push(
            value,
            Op::Iou {
                p,
                target: target.clone(),
            },
        ))
    }
}

pub(crate) fn backward<T: Scalar>(sink: &mut GradSink<'_, T>, op: &Op<T>, gy: &[T]) {
    let tape = sink.tape;
    match op {
        Op::Bce { p, target, eps } => {
            let pv = tape.value(*p).data();
            let hi = T::ONE - *eps;
            let k = gy[0] / T::from_f64(pv.len() as f64);
            let g = pv
                .iter()
                .zip(target.data())
                .map(|(&x, &t)| {
                    if x < *eps || x > hi {
                        T::ZERO
                    } else {
                        k * (x - t) / (x * (T::ONE - x))
                    }
                })
                .collect();
            sink.add_owned(*p, g);
        }
        Op::Iou { p, target } => {
            let pv = tape.value(*p);
            let item = batch_len(pv);
            let n = pv.dims()[0];
            let k = gy[0] / T::from_f64(n as f64);
            let mut g = vec![T::ZERO; pv.len()];
            for ((dst, pc), tc) in g
                .chunks_mut(item)
                .zip(pv.data().chunks(item))
                .zip(target.data().chunks(item))
            {
                let (inter, union) = iou_terms(pc, tc);
                if union == T::ZERO {
                    continue;
                }
                let u2 = union * union;
                for (o, &t) in dst.iter_mut().zip(tc) {
                    // d(1 − I/U)/dp = −(t·U − I·(1 − t)) / U²
                    *o = -k * (t * union - inter * (T::ONE - t)) / u2;
                }
            }
            sink.add_owned(*p, g);
        }
        _ => unreachable!("not a loss op"),
    }
}
