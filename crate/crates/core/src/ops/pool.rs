use crate::error::Result;
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    /// Mean over H×W → N×C×1×1.
    GapSpatial,
    /// Mean over channels → N×1×H×W.
    GapChannel,
    /// Max over channels → N×1×H×W; ties resolve to the lowest channel.
    GmpChannel,
}

impl<T: Scalar> Tape<T> {
    pub fn pool(&mut self, x: Var, kind: PoolKind) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4()?;
        let plane = h * w;
        let xv = self.value(x).data();
        let mut argmax = Vec::new();
        let value = match kind {
            PoolKind::GapSpatial => {
                let k = T::from_f64(1.0 / plane as f64);
                let data = xv.chunks(plane).map(|p| p.iter().copied().sum::<T>() * k).collect();
                Tensor::from_parts(vec![n, c, 1, 1], data)
            }
            PoolKind::GapChannel => {
                let k = T::from_f64(1.0 / c as f64);
                let mut data = vec![T::ZERO; n * plane];
                for b in 0..n {
                    let dst = &mut data[b * plane..(b + 1) * plane];
                    for ch in 0..c {
                        let src = &xv[(b * c + ch) * plane..(b * c + ch + 1) * plane];
                        dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
                    }
                    dst.iter_mut().for_each(|d| *d *= k);
                }
                Tensor::from_parts(vec![n, 1, h, w], data)
            }
            PoolKind::GmpChannel => {
                let mut data = vec![T::ZERO; n * plane];
                argmax = vec![0u32; n * plane];
                for b in 0..n {
                    for p in 0..plane {
                        let mut best = xv[b * c * plane + p];
                        let mut arg = 0;
                        for ch in 1..c {
                            let v = xv[(b * c + ch) * plane + p];
                            if v > best {
                                best = v;
                                arg = ch;
                            }
                        }
                        data[b * plane + p] = best;
                        argmax[b * plane + p] = arg as u32;
                    }
                }
                Tensor::from_parts(vec![n, 1, h, w], data)
            }
        };
        Ok(self.push(value, Op::Pool { x, kind, argmax }))
    }
}

pub(crate) fn backward<T: Scalar>(
    sink: &mut GradSink<'_, T>,
    x: Var,
    kind: PoolKind,
    argmax: &[u32],
    gy: &[T],
) {
    let [n, c, h, w] = sink.tape.value(x).nchw();
    let plane = h * w;
    let mut gx = vec![T::ZERO; n * c * plane];
    match kind {
        PoolKind::GapSpatial => {
            let k = T::from_f64(1.0 / plane as f64);
            for (chunk, &d) in gx.chunks_mut(plane).zip(gy) {
                chunk.fill(d * k);
            }
        }
        PoolKind::GapChannel => {
            let k = T::from_f64(1.0 / c as f64);
            for b in 0..n {
                for ch in 0..c {
                    let dst = &mut gx[(b * c + ch) * plane..(b * c + ch + 1) * plane];
                    dst.iter_mut()
                        .zip(&gy[b * plane..(b + 1) * plane])
                        .for_each(|(o, &d)| *o = d * k);
                }
            }
        }
        PoolKind::GmpChannel => {
            for b in 0..n {
                for p in 0..plane {
                    let ch = argmax[b * plane + p] as usize;
                    gx[(b * c + ch) * plane + p] = gy[b * plane + p];
                }
            }
        }
    }
    sink.add_owned(x, gx);
}
