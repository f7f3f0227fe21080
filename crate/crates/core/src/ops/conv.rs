//! 2-D convolution with stride, zero padding and dilation, lowered to GEMM
//! through an im2col buffer.

use crate::error::{Error, Result};
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Default for ConvGeometry {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            dilation: 1,
        }
    }
}

impl ConvGeometry {
    pub fn new(stride: usize, padding: usize, dilation: usize) -> Self {
        Self {
            stride,
            padding,
            dilation,
        }
    }

    /// Padding that keeps H×W unchanged at stride 1 for an odd kernel.
    pub fn same(kernel: usize, dilation: usize) -> Self {
        Self::new(1, dilation * (kernel - 1) / 2, dilation)
    }

    /// `floor((len + 2p − d(k−1) − 1)/s) + 1`, or an error if that is below 1.
    pub fn output_len(&self, len: usize, kernel: usize) -> Result<usize> {
        if self.stride == 0 || self.dilation == 0 {
            return Err(Error::argument("stride and dilation must be >= 1"));
        }
        let span = self.dilation * (kernel - 1) + 1;
        let padded = len + 2 * self.padding;
        if padded < span {
            return Err(Error::geometry(format!(
                "input length {len} with padding {} is smaller than the dilated kernel span {span}",
                self.padding
            )));
        }
        Ok((padded - span) / self.stride + 1)
    }

    fn is_pointwise(&self, kh: usize, kw: usize) -> bool {
        kh == 1 && kw == 1 && self.stride == 1 && self.padding == 0
    }
}

struct Layout {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

impl Layout {
    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }
    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }
}

fn layout(x: &[usize], k: &[usize], geom: ConvGeometry) -> Result<Layout> {
    if x.len() != 4 || k.len() != 4 {
        return Err(Error::shape(format!(
            "conv2d expects rank-4 input and kernel, got {x:?} and {k:?}"
        )));
    }
    let (n, cin, h, w) = (x[0], x[1], x[2], x[3]);
    let (cout, kcin, kh, kw) = (k[0], k[1], k[2], k[3]);
    if kcin != cin {
        return Err(Error::shape(format!(
            "conv2d channel mismatch: input has {cin} channels, kernel expects {kcin}"
        )));
    }
    let oh = geom.output_len(h, kh)?;
    let ow = geom.output_len(w, kw)?;
    Ok(Layout {
        n,
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        oh,
        ow,
    })
}

/// Output row range `[lo, hi)` for which `o*stride − pad + off` lands in `[0, len)`.
fn valid_range(out_len: usize, len: usize, stride: usize, pad: usize, off: usize) -> (usize, usize) {
    let shift = off as isize - pad as isize;
    let s = stride as isize;
    // smallest o with o*s + shift >= 0
    let lo = if shift >= 0 { 0 } else { ((-shift) + s - 1) / s };
    // largest o with o*s + shift <= len-1
    let top = len as isize - 1 - shift;
    let hi = if top < 0 { 0 } else { top / s + 1 };
    let lo = (lo as usize).min(out_len);
    let hi = (hi as usize).min(out_len);
    (lo, hi.max(lo))
}

fn im2col<T: Scalar>(x: &[T], l: &Layout, g: ConvGeometry, cols: &mut [T]) {
    let plane = l.out_plane();
    for c in 0..l.cin {
        let src = &x[c * l.h * l.w..(c + 1) * l.h * l.w];
        for ki in 0..l.kh {
            let (ylo, yhi) = valid_range(l.oh, l.h, g.stride, g.padding, ki * g.dilation);
            for kj in 0..l.kw {
                let row = (c * l.kh + ki) * l.kw + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let (xlo, xhi) = valid_range(l.ow, l.w, g.stride, g.padding, kj * g.dilation);
                for oy in 0..l.oh {
                    let out_row = &mut dst[oy * l.ow..(oy + 1) * l.ow];
                    if oy < ylo || oy >= yhi {
                        out_row.fill(T::ZERO);
                        continue;
                    }
                    let iy = oy * g.stride + ki * g.dilation - g.padding;
                    let in_row = &src[iy * l.w..(iy + 1) * l.w];
                    out_row[..xlo].fill(T::ZERO);
                    out_row[xhi..].fill(T::ZERO);
                    for (ox, o) in out_row.iter_mut().enumerate().take(xhi).skip(xlo) {
                        *o = in_row[ox * g.stride + kj * g.dilation - g.padding];
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], l: &Layout, g: ConvGeometry, dx: &mut [T]) {
    let plane = l.out_plane();
    for c in 0..l.cin {
        let dst = &mut dx[c * l.h * l.w..(c + 1) * l.h * l.w];
        for ki in 0..l.kh {
            let (ylo, yhi) = valid_range(l.oh, l.h, g.stride, g.padding, ki * g.dilation);
            for kj in 0..l.kw {
                let row = (c * l.kh + ki) * l.kw + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                let (xlo, xhi) = valid_range(l.ow, l.w, g.stride, g.padding, kj * g.dilation);
                for oy in ylo..yhi {
                    let iy = oy * g.stride + ki * g.dilation - g.padding;
                    let in_row = &mut dst[iy * l.w..(iy + 1) * l.w];
                    for ox in xlo..xhi {
                        in_row[ox * g.stride + kj * g.dilation - g.padding] += src[oy * l.ow + ox];
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    /// Cross-correlation of an N×Cin×H×W input with a Cout×Cin×Kh×Kw kernel.
    pub fn conv2d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    ) -> Result<Var> {
        let l = layout(self.dims(x), self.dims(kernel), geom)?;
        if let Some(b) = bias {
            if self.value(b).len() != l.cout {
                return Err(Error::shape(format!(
                    "conv2d bias has {} values for {} output channels",
                    self.value(b).len(),
                    l.cout
                )));
            }
        }
        let pointwise = geom.is_pointwise(l.kh, l.kw);
        let keep_cols = self.recording()
            && !pointwise
            && (self.requires_grad(kernel) || self.requires_grad(x));
        let patch = l.patch();
        let plane = l.out_plane();
        let in_len = l.cin * l.h * l.w;
        let out_len = l.cout * plane;

        let xv = self.value(x).data();
        let kv = self.value(kernel).data();
        let mut out = vec![T::ZERO; l.n * out_len];
        let mut saved = if keep_cols {
            vec![T::ZERO; l.n * patch * plane]
        } else {
            Vec::new()
        };
        let mut scratch = if pointwise || keep_cols {
            Vec::new()
        } else {
            vec![T::ZERO; patch * plane]
        };
        for b in 0..l.n {
            let xin = &xv[b * in_len..(b + 1) * in_len];
            let cols: &[T] = if pointwise {
                xin
            } else if keep_cols {
                let dst = &mut saved[b * patch * plane..(b + 1) * patch * plane];
                im2col(xin, &l, geom, dst);
                dst
            } else {
                im2col(xin, &l, geom, &mut scratch);
                &scratch
            };
            T::gemm(
                l.cout,
                patch,
                plane,
                T::ONE,
                kv,
                (patch as isize, 1),
                cols,
                (plane as isize, 1),
                T::ZERO,
                &mut out[b * out_len..(b + 1) * out_len],
                (plane as isize, 1),
            );
        }
        if let Some(bvar) = bias {
            let bv = self.value(bvar).data();
            for chunk in out.chunks_mut(plane).enumerate() {
                let (i, chunk) = chunk;
                let bias = bv[i % l.cout];
                chunk.iter_mut().for_each(|v| *v += bias);
            }
        }
        let value = Tensor::from_parts(vec![l.n, l.cout, l.oh, l.ow], out);
        Ok(self.push(
            value,
            Op::Conv2d {
                x,
                kernel,
                bias,
                geom,
                cols: saved,
            },
        ))
    }
}

pub(crate) fn backward<T: Scalar>(
    sink: &mut GradSink<'_, T>,
    x: Var,
    kernel: Var,
    bias: Option<Var>,
    geom: ConvGeometry,
    cols: &[T],
    gy: &[T],
) {
    let tape = sink.tape;
    let l = layout(tape.value(x).dims(), tape.value(kernel).dims(), geom)
        .expect("conv layout validated in forward");
    let patch = l.patch();
    let plane = l.out_plane();
    let in_len = l.cin * l.h * l.w;
    let out_len = l.cout * plane;
    let pointwise = geom.is_pointwise(l.kh, l.kw);

    if let Some(b) = bias.filter(|b| sink.wants(*b)) {
        let mut gb = vec![T::ZERO; l.cout];
        for (i, chunk) in gy.chunks(plane).enumerate() {
            gb[i % l.cout] += chunk.iter().copied().sum();
        }
        sink.add_owned(b, gb);
    }

    if sink.wants(kernel) {
        let xv = tape.value(x).data();
        let mut gk = vec![T::ZERO; l.cout * patch];
        for b in 0..l.n {
            let c: &[T] = if pointwise {
                &xv[b * in_len..(b + 1) * in_len]
            } else {
                &cols[b * patch * plane..(b + 1) * patch * plane]
            };
            // gk (cout×patch) += gy_b (cout×plane) · colsᵀ (plane×patch)
            T::gemm(
                l.cout,
                plane,
                patch,
                T::ONE,
                &gy[b * out_len..(b + 1) * out_len],
                (plane as isize, 1),
                c,
                (1, plane as isize),
                T::ONE,
                &mut gk,
                (patch as isize, 1),
            );
        }
        sink.add_owned(kernel, gk);
    }

    if sink.wants(x) {
        let kv = tape.value(kernel).data();
        let mut gx = vec![T::ZERO; l.n * in_len];
        let mut gcols = if pointwise {
            Vec::new()
        } else {
            vec![T::ZERO; patch * plane]
        };
        for b in 0..l.n {
            let gyb = &gy[b * out_len..(b + 1) * out_len];
            let dst = &mut gx[b * in_len..(b + 1) * in_len];
            // kᵀ (patch×cout) · gy_b (cout×plane)
            if pointwise {
                T::gemm(
                    patch,
                    l.cout,
                    plane,
                    T::ONE,
                    kv,
                    (1, patch as isize),
                    gyb,
                    (plane as isize, 1),
                    T::ZERO,
                    dst,
                    (plane as isize, 1),
                );
            } else {
                T::gemm(
                    patch,
                    l.cout,
                    plane,
                    T::ONE,
                    kv,
                    (1, patch as isize),
                    gyb,
                    (plane as isize, 1),
                    T::ZERO,
                    &mut gcols,
                    (plane as isize, 1),
                );
                col2im(&gcols, &l, geom, dst);
            }
        }
        sink.add_owned(x, gx);
    }
}
