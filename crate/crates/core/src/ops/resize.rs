//! Bilinear resampling with the half-pixel (`align_corners = false`) convention.

use crate::error::{Error, Result};
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
struct Tap {
    lo: usize,
    hi: usize,
    w_lo: f64,
    w_hi: f64,
}

fn taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            let frac = src - lo as f64;
            Tap {
                lo,
                hi,
                w_lo: 1.0 - frac,
                w_hi: frac,
            }
        })
        .collect()
}

/// Precomputed interpolation taps for one input/output size pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ResizePlan {
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    ys: Vec<Tap>,
    xs: Vec<Tap>,
}

impl ResizePlan {
    pub fn new(in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Result<Self> {
        if in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0 {
            return Err(Error::geometry("bilinear resize with an empty extent"));
        }
        Ok(Self {
            in_h,
            in_w,
            out_h,
            out_w,
            ys: taps(in_h, out_h),
            xs: taps(in_w, out_w),
        })
    }

    pub fn output_hw(&self) -> (usize, usize) {
        (self.out_h, self.out_w)
    }

    /// Resamples one H×W plane.
    pub fn apply<T: Scalar>(&self, src: &[T], dst: &mut [T]) {
        debug_assert_eq!(src.len(), self.in_h * self.in_w);
        debug_assert_eq!(dst.len(), self.out_h * self.out_w);
        for (oy, ty) in self.ys.iter().enumerate() {
            let (wy0, wy1) = (T::from_f64(ty.w_lo), T::from_f64(ty.w_hi));
            let r0 = &src[ty.lo * self.in_w..(ty.lo + 1) * self.in_w];
            let r1 = &src[ty.hi * self.in_w..(ty.hi + 1) * self.in_w];
            for (ox, tx) in self.xs.iter().enumerate() {
                let (wx0, wx1) = (T::from_f64(tx.w_lo), T::from_f64(tx.w_hi));
                let top = wx0 * r0[tx.lo] + wx1 * r0[tx.hi];
                let bottom = wx0 * r1[tx.lo] + wx1 * r1[tx.hi];
                dst[oy * self.out_w + ox] = wy0 * top + wy1 * bottom;
            }
        }
    }

    /// Adjoint of [`apply`](Self::apply): scatters an output gradient back.
    fn apply_transpose<T: Scalar>(&self, gy: &[T], gx: &mut [T]) {
        for (oy, ty) in self.ys.iter().enumerate() {
            let (wy0, wy1) = (T::from_f64(ty.w_lo), T::from_f64(ty.w_hi));
            for (ox, tx) in self.xs.iter().enumerate() {
                let (wx0, wx1) = (T::from_f64(tx.w_lo), T::from_f64(tx.w_hi));
                let d = gy[oy * self.out_w + ox];
                let (top, bottom) = (wy0 * d, wy1 * d);
                gx[ty.lo * self.in_w + tx.lo] += wx0 * top;
                gx[ty.lo * self.in_w + tx.hi] += wx1 * top;
                gx[ty.hi * self.in_w + tx.lo] += wx0 * bottom;
                gx[ty.hi * self.in_w + tx.hi] += wx1 * bottom;
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn resize_bilinear(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4()?;
        let plan = ResizePlan::new(h, w, out_h, out_w)?;
        let xv = self.value(x).data();
        let mut data = vec![T::ZERO; n * c * out_h * out_w];
        for (src, dst) in xv.chunks(h * w).zip(data.chunks_mut(out_h * out_w)) {
            plan.apply(src, dst);
        }
        let value = Tensor::from_parts(vec![n, c, out_h, out_w], data);
        Ok(self.push(value, Op::Resize { x, plan }))
    }

    /// Integer-factor upsampling of H and W.
    pub fn upsample_bilinear(&mut self, x: Var, factor: usize) -> Result<Var> {
        if factor == 0 {
            return Err(Error::argument("upsampling factor must be >= 1"));
        }
        let [_, _, h, w] = self.value(x).dims4()?;
        self.resize_bilinear(x, h * factor, w * factor)
    }
}

pub(crate) fn backward<T: Scalar>(sink: &mut GradSink<'_, T>, x: Var, plan: &ResizePlan, gy: &[T]) {
    let len = sink.tape.value(x).len();
    let mut gx = vec![T::ZERO; len];
    let out_plane = plan.out_h * plan.out_w;
    let in_plane = plan.in_h * plan.in_w;
    for (g, dst) in gy.chunks(out_plane).zip(gx.chunks_mut(in_plane)) {
        plan.apply_transpose(g, dst);
    }
    sink.add_owned(x, gx);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_one_is_identity() {
        let mut tape = Tape::<f32>::new();
        let t = Tensor::from_fn(&[1, 2, 3, 4], |i| i as f32 * 0.1).unwrap();
        let x = tape.constant(t.clone());
        let y = tape.upsample_bilinear(x, 1).unwrap();
        assert_eq!(tape.value(y), &t);
    }

    #[test]
    fn taps_clamp_at_borders() {
        let t = taps(2, 4);
        assert_eq!((t[0].lo, t[0].hi, t[0].w_lo), (0, 1, 1.0));
        assert_eq!((t[3].lo, t[3].hi), (1, 1));
        assert!((t[1].w_hi - 0.25).abs() < 1e-15);
    }
}
