//! Activations and the small set of elementwise/broadcast arithmetic the
//! network needs.

use crate::error::{Error, Result};
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

/// Logistic function, evaluated without overflow and kept strictly inside (0, 1).
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    let y = if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    };
    let upper = T::ONE - T::EPSILON * T::from_f64(0.5);
    y.max(T::TINY).min(upper)
}

impl<T: Scalar> Tape<T> {
    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > T::ZERO { v } else { T::ZERO });
        self.push(value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.push(value, Op::Sigmoid(x))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        match kind {
            Activation::Relu => self.relu(x),
            Activation::Sigmoid => self.sigmoid(x),
            Activation::None => x,
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.dims() != vb.dims() {
            return Err(Error::shape(format!(
                "add of mismatched dims {:?} and {:?}",
                va.dims(),
                vb.dims()
            )));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::from_parts(va.dims().to_vec(), data);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.dims() != vb.dims() {
            return Err(Error::shape(format!(
                "mul of mismatched dims {:?} and {:?}",
                va.dims(),
                vb.dims()
            )));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::from_parts(va.dims().to_vec(), data);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.push(value, Op::ScaleConst(x, c))
    }

    /// Multiplies batch item `n` of `x` by the scalar `s[n]`.
    pub fn scale_batch(&mut self, x: Var, s: Var) -> Result<Var> {
        let (vx, vs) = (self.value(x), self.value(s));
        let n = vx.dims()[0];
        if vs.len() != n {
            return Err(Error::shape(format!(
                "per-item scale has {} values for batch of {n}",
                vs.len()
            )));
        }
        let item = vx.len() / n;
        let data = vx
            .data()
            .chunks(item)
            .zip(vs.data())
            .flat_map(|(chunk, &k)| chunk.iter().map(move |&v| v * k))
            .collect();
        let value = Tensor::from_parts(vx.dims().to_vec(), data);
        Ok(self.push(value, Op::ScaleBatch { x, s }))
    }

    /// `x[n,c,h,w] * m[n,0,h,w]`.
    pub fn mul_planes(&mut self, x: Var, m: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4()?;
        let [mn, mc, mh, mw] = self.value(m).dims4()?;
        if (mn, mc, mh, mw) != (n, 1, h, w) {
            return Err(Error::shape(format!(
                "plane map {:?} does not broadcast over {:?}",
                [mn, mc, mh, mw],
                [n, c, h, w]
            )));
        }
        let plane = h * w;
        let (vx, vm) = (self.value(x).data(), self.value(m).data());
        let mut data = vec![T::ZERO; vx.len()];
        for b in 0..n {
            let mp = &vm[b * plane..(b + 1) * plane];
            for ch in 0..c {
                let off = (b * c + ch) * plane;
                for ((o, &v), &k) in data[off..off + plane].iter_mut().zip(&vx[off..off + plane]).zip(mp) {
                    *o = v * k;
                }
            }
        }
        let value = Tensor::from_parts(vec![n, c, h, w], data);
        Ok(self.push(value, Op::MulPlanes { x, m }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let value = Tensor::scalar(v.sum() / T::from_f64(v.len() as f64));
        self.push(value, Op::Mean(x))
    }

    pub fn reshape(&mut self, x: Var, dims: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(dims)?;
        Ok(self.push(value, Op::Reshape(x)))
    }
}

pub(crate) fn backward<T: Scalar>(sink: &mut GradSink<'_, T>, op: &Op<T>, y: &Tensor<T>, gy: &[T]) {
    let tape = sink.tape;
    match *op {
        Op::Relu(x) => {
            let g = gy
                .iter()
                .zip(y.data())
                .map(|(&d, &v)| if v > T::ZERO { d } else { T::ZERO })
                .collect();
            sink.add_owned(x, g);
        }
        Op::Sigmoid(x) => {
            let g = gy
                .iter()
                .zip(y.data())
                .map(|(&d, &v)| d * v * (T::ONE - v))
                .collect();
            sink.add_owned(x, g);
        }
        Op::Add(a, b) => {
            sink.add(a, gy);
            sink.add(b, gy);
        }
        Op::Mul(a, b) => {
            let (va, vb) = (tape.value(a).data(), tape.value(b).data());
            if sink.wants(a) {
                sink.add_owned(a, gy.iter().zip(vb).map(|(&d, &v)| d * v).collect());
            }
            if sink.wants(b) {
                sink.add_owned(b, gy.iter().zip(va).map(|(&d, &v)| d * v).collect());
            }
        }
        Op::ScaleConst(x, c) => sink.add_owned(x, gy.iter().map(|&d| d * c).collect()),
        Op::ScaleBatch { x, s } => {
            let (vx, vs) = (tape.value(x).data(), tape.value(s).data());
            let item = vx.len() / vs.len();
            if sink.wants(x) {
                let g = gy
                    .chunks(item)
                    .zip(vs)
                    .flat_map(|(chunk, &k)| chunk.iter().map(move |&d| d * k))
                    .collect();
                sink.add_owned(x, g);
            }
            if sink.wants(s) {
                let g = gy
                    .chunks(item)
                    .zip(vx.chunks(item))
                    .map(|(d, v)| d.iter().zip(v).map(|(&a, &b)| a * b).sum())
                    .collect();
                sink.add_owned(s, g);
            }
        }
        Op::MulPlanes { x, m } => {
            let [n, c, h, w] = tape.value(x).nchw();
            let plane = h * w;
            let (vx, vm) = (tape.value(x).data(), tape.value(m).data());
            let mut gx = if sink.wants(x) { vec![T::ZERO; vx.len()] } else { Vec::new() };
            let mut gm = vec![T::ZERO; vm.len()];
            for b in 0..n {
                for ch in 0..c {
                    let off = (b * c + ch) * plane;
                    for p in 0..plane {
                        let d = gy[off + p];
                        if !gx.is_empty() {
                            gx[off + p] = d * vm[b * plane + p];
                        }
                        gm[b * plane + p] += d * vx[off + p];
                    }
                }
            }
            if !gx.is_empty() {
                sink.add_owned(x, gx);
            }
            sink.add_owned(m, gm);
        }
        Op::Sum(x) => {
            let len = tape.value(x).len();
            sink.add_owned(x, vec![gy[0]; len]);
        }
        Op::Mean(x) => {
            let len = tape.value(x).len();
            let g = gy[0] / T::from_f64(len as f64);
            sink.add_owned(x, vec![g; len]);
        }
        Op::Reshape(x) => sink.add(x, gy),
        _ => unreachable!("not an elementwise op"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_values() {
        assert_eq!(sigmoid(0.0_f32), 0.5);
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::scalar(-2.5));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0]);
    }

    #[test]
    fn sigmoid_is_stable_for_large_magnitudes() {
        let v = sigmoid(-100.0_f32);
        assert!(v > 0.0 && v.is_finite());
        let reference = 1.0 / (1.0 + (100.0_f64).exp());
        // e^-100 is subnormal in f32: one subnormal step of accuracy is all there is.
        assert!(((v as f64) - reference).abs() <= f32::from_bits(1) as f64);
        let v = sigmoid(-100.0_f64);
        assert!(((v - reference) / reference).abs() < 1e-12);
        assert!(sigmoid(60.0_f32) < 1.0);
        assert!(sigmoid(800.0_f64) < 1.0 && sigmoid(-800.0_f64) > 0.0);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::from_fn(&[2, 3, 1, 2], |i| i as f64).unwrap());
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert!(g.of(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sigmoid_slope_at_zero() {
        let mut tape = Tape::<f64>::new();
        let w = tape.param("w", Tensor::scalar(0.0));
        let x = tape.constant(Tensor::scalar(1.0));
        let wx = tape.mul(w, x).unwrap();
        let y = tape.sigmoid(wx);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get("w").unwrap().data(), &[0.25]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::scalar(3.0));
        let y = tape.add(x, x).unwrap();
        let z = tape.mul(y, x).unwrap(); // 2x²
        let g = tape.backward(z).unwrap();
        assert_eq!(g.of(x).unwrap().data(), &[12.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::<f32>::new();
        let x = tape.input(Tensor::zeros(&[2]).unwrap());
        assert!(matches!(tape.backward(x), Err(Error::Argument(_))));
    }

    #[test]
    fn empty_tape_backward_is_noop() {
        let tape = Tape::<f32>::new();
        assert!(tape.backward(Var(0)).unwrap().is_empty());
    }

    #[test]
    fn unreachable_params_get_zero_gradients() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param("a", Tensor::scalar(2.0));
        let _b = tape.param("b", Tensor::full(&[3], 1.0).unwrap());
        let l = tape.mul(a, a).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get("a").unwrap().data(), &[4.0]);
        assert_eq!(g.get("b").unwrap().data(), &[0.0, 0.0, 0.0]);
    }
}
