//! Channel concatenation/slicing and fully-connected layers.

use crate::error::{Error, Result};
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::{Scalar, Tensor};

impl<T: Scalar> Tape<T> {
    /// Concatenates rank-4 tensors along the channel axis, in order.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::argument("concat of an empty list"))?;
        let [n, _, h, w] = self.value(first).dims4()?;
        let mut channels = Vec::with_capacity(xs.len());
        for &x in xs {
            let [xn, xc, xh, xw] = self.value(x).dims4()?;
            if (xn, xh, xw) != (n, h, w) {
                return Err(Error::shape(format!(
                    "concat: {:?} does not match N/H/W of {:?}",
                    self.dims(x),
                    self.dims(first)
                )));
            }
            channels.push(xc);
        }
        let total: usize = channels.iter().sum();
        let plane = h * w;
        let mut data = Vec::with_capacity(n * total * plane);
        for b in 0..n {
            for (&x, &c) in xs.iter().zip(&channels) {
                let v = self.value(x).data();
                data.extend_from_slice(&v[b * c * plane..(b + 1) * c * plane]);
            }
        }
        let value = Tensor::from_parts(vec![n, total, h, w], data);
        Ok(self.push(value, Op::Concat(xs.to_vec())))
    }

    /// Channels `[start, end)` of a rank-4 tensor.
    pub fn slice_channels(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let value = self.value(x).slice_channels(start, end)?;
        Ok(self.push(value, Op::SliceChannels { x, start }))
    }

    /// `y = x·Wᵀ + b` for `x` of shape N×in (or N×in×1×1), `W` of shape out×in.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let xd = self.dims(x).to_vec();
        let n = xd[0];
        let fan_in = self.value(x).len() / n;
        let wd = self.dims(weight).to_vec();
        if wd.len() != 2 || wd[1] != fan_in {
            return Err(Error::shape(format!(
                "linear: weight {wd:?} incompatible with input {xd:?}"
            )));
        }
        let out = wd[0];
        if let Some(b) = bias {
            if self.value(b).len() != out {
                return Err(Error::shape(format!(
                    "linear: bias has {} values for {out} outputs",
                    self.value(b).len()
                )));
            }
        }
        let mut data = vec![T::ZERO; n * out];
        T::gemm(
            n,
            fan_in,
            out,
            T::ONE,
            self.value(x).data(),
            (fan_in as isize, 1),
            self.value(weight).data(),
            (1, fan_in as isize),
            T::ZERO,
            &mut data,
            (out as isize, 1),
        );
        if let Some(b) = bias {
            let bv = self.value(b).data();
            for row in data.chunks_mut(out) {
                row.iter_mut().zip(bv).for_each(|(y, &bb)| *y += bb);
            }
        }
        let value = Tensor::from_parts(vec![n, out], data);
        Ok(self.push(value, Op::Linear { x, weight, bias }))
    }
}

pub(crate) fn backward<T: Scalar>(sink: &mut GradSink<'_, T>, op: &Op<T>, gy: &[T]) {
    let tape = sink.tape;
    match op {
        Op::Concat(xs) => {
            let [n, total, h, w] = tape.value(xs[0]).nchw();
            let _ = total;
            let plane = h * w;
            let out_c: usize = xs.iter().map(|&x| tape.value(x).nchw()[1]).sum();
            let mut offset = 0;
            for &x in xs {
                let c = tape.value(x).nchw()[1];
                if sink.wants(x) {
                    let mut g = Vec::with_capacity(n * c * plane);
                    for b in 0..n {
                        let base = (b * out_c + offset) * plane;
                        g.extend_from_slice(&gy[base..base + c * plane]);
                    }
                    sink.add_owned(x, g);
                }
                offset += c;
            }
        }
        Op::SliceChannels { x, start } => {
            let [n, c, h, w] = tape.value(*x).nchw();
            let plane = h * w;
            let width = gy.len() / (n * plane);
            let buf = sink.buffer(*x);
            for b in 0..n {
                let dst = (b * c + start) * plane;
                let src = b * width * plane;
                for (o, &d) in buf[dst..dst + width * plane]
                    .iter_mut()
                    .zip(&gy[src..src + width * plane])
                {
                    *o += d;
                }
            }
            let _ = c;
        }
        Op::Linear { x, weight, bias } => {
            let n = tape.value(*x).dims()[0];
            let fan_in = tape.value(*x).len() / n;
            let out = tape.value(*weight).dims()[0];
            if let Some(b) = bias.filter(|b| sink.wants(*b)) {
                let mut gb = vec![T::ZERO; out];
                for row in gy.chunks(out) {
                    gb.iter_mut().zip(row).for_each(|(a, &d)| *a += d);
                }
                sink.add_owned(b, gb);
            }
            if sink.wants(*weight) {
                let mut gw = vec![T::ZERO; out * fan_in];
                T::gemm(
                    out,
                    n,
                    fan_in,
                    T::ONE,
                    gy,
                    (1, out as isize),
                    tape.value(*x).data(),
                    (fan_in as isize, 1),
                    T::ZERO,
                    &mut gw,
                    (fan_in as isize, 1),
                );
                sink.add_owned(*weight, gw);
            }
            if sink.wants(*x) {
                let mut gx = vec![T::ZERO; n * fan_in];
                T::gemm(
                    n,
                    out,
                    fan_in,
                    T::ONE,
                    gy,
                    (out as isize, 1),
                    tape.value(*weight).data(),
                    (fan_in as isize, 1),
                    T::ZERO,
                    &mut gx,
                    (fan_in as isize, 1),
                );
                sink.add_owned(*x, gx);
            }
        }
        _ => unreachable!("not a structural op"),
    }
}
