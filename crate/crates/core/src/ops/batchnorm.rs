use crate::error::{Error, Result};
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// Normalisation epsilon.
pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the newest batch in the running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Normalise with batch statistics and report them for running-stat updates.
    Train,
    /// Normalise with the running statistics.
    Eval,
}

pub(crate) struct BnSaved<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    train: bool,
}

impl<T> Default for BnSaved<T> {
    fn default() -> Self {
        Self {
            xhat: Vec::new(),
            inv_std: Vec::new(),
            train: false,
        }
    }
}

/// Per-channel batch statistics observed in train mode.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased variance (biased when the reduction has a single element).
    pub var: Vec<T>,
}

impl<T: Scalar> BatchStats<T> {
    /// Exponential moving update of running statistics.
    pub fn update_running(&self, running_mean: &mut [T], running_var: &mut [T], momentum: f64) {
        let m = T::from_f64(momentum);
        let keep = T::ONE - m;
        for (r, &b) in running_mean.iter_mut().zip(&self.mean) {
            *r = keep * *r + m * b;
        }
        for (r, &b) in running_var.iter_mut().zip(&self.var) {
            *r = keep * *r + m * b;
        }
    }
}

impl<T: Scalar> Tape<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &Tensor<T>,
        running_var: &Tensor<T>,
        mode: BnMode,
        eps: f64,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        let [n, c, h, w] = self.value(x).dims4()?;
        for (what, len) in [
            ("gamma", self.value(gamma).len()),
            ("beta", self.value(beta).len()),
            ("running_mean", running_mean.len()),
            ("running_var", running_var.len()),
        ] {
            if len != c {
                return Err(Error::shape(format!(
                    "batchnorm {what} has {len} values for {c} channels"
                )));
            }
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::argument("batchnorm epsilon must be positive"));
        }
        let plane = h * w;
        let count = n * plane;
        if count == 0 {
            return Err(Error::geometry("batchnorm over an empty batch·spatial extent"));
        }
        let xv = self.value(x).data();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let eps_t = T::from_f64(eps);
        let inv_count = T::from_f64(1.0 / count as f64);

        let (mean, var_biased, stats) = match mode {
            BnMode::Train => {
                let mut mean = vec![T::ZERO; c];
                let mut var = vec![T::ZERO; c];
                for b in 0..n {
                    for ch in 0..c {
                        let s = &xv[(b * c + ch) * plane..(b * c + ch + 1) * plane];
                        mean[ch] += s.iter().copied().sum::<T>();
                    }
                }
                mean.iter_mut().for_each(|m| *m *= inv_count);
                for b in 0..n {
                    for ch in 0..c {
                        let s = &xv[(b * c + ch) * plane..(b * c + ch + 1) * plane];
                        let mu = mean[ch];
                        var[ch] += s.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
                    }
                }
                let unbiased: Vec<T> = if count > 1 {
                    let k = T::from_f64(1.0 / (count - 1) as f64);
                    var.iter().map(|&v| v * k).collect()
                } else {
                    var.clone()
                };
                var.iter_mut().for_each(|v| *v *= inv_count);
                let stats = BatchStats {
                    mean: mean.clone(),
                    var: unbiased,
                };
                (mean, var, Some(stats))
            }
            BnMode::Eval => (
                running_mean.data().to_vec(),
                running_var.data().to_vec(),
                None,
            ),
        };
        let inv_std: Vec<T> = var_biased
            .iter()
            .map(|&v| T::ONE / (v + eps_t).sqrt())
            .collect();

        let mut out = vec![T::ZERO; xv.len()];
        let mut xhat = vec![T::ZERO; xv.len()];
        for b in 0..n {
            for ch in 0..c {
                let range = (b * c + ch) * plane..(b * c + ch + 1) * plane;
                let (mu, is, g, be) = (mean[ch], inv_std[ch], gv[ch], bv[ch]);
                for ((o, xh), &v) in out[range.clone()]
                    .iter_mut()
                    .zip(&mut xhat[range.clone()])
                    .zip(&xv[range])
                {
                    *xh = (v - mu) * is;
                    *o = g * *xh + be;
                }
            }
        }
        let saved = BnSaved {
            xhat,
            inv_std,
            train: mode == BnMode::Train,
        };
        let value = Tensor::from_parts(vec![n, c, h, w], out);
        let var = self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                saved,
            },
        );
        Ok((var, stats))
    }
}

pub(crate) fn backward<T: Scalar>(
    sink: &mut GradSink<'_, T>,
    x: Var,
    gamma: Var,
    beta: Var,
    saved: &BnSaved<T>,
    gy: &[T],
) {
    let tape = sink.tape;
    let [n, c, h, w] = tape.value(x).nchw();
    let plane = h * w;
    let count = (n * plane) as f64;
    let gv = tape.value(gamma).data();

    let mut sum_dy = vec![T::ZERO; c];
    let mut sum_dy_xhat = vec![T::ZERO; c];
    for b in 0..n {
        for ch in 0..c {
            let range = (b * c + ch) * plane..(b * c + ch + 1) * plane;
            for (&d, &xh) in gy[range.clone()].iter().zip(&saved.xhat[range]) {
                sum_dy[ch] += d;
                sum_dy_xhat[ch] += d * xh;
            }
        }
    }
    if sink.wants(x) {
        let mut gx = vec![T::ZERO; gy.len()];
        let inv_count = T::from_f64(1.0 / count);
        for b in 0..n {
            for ch in 0..c {
                let range = (b * c + ch) * plane..(b * c + ch + 1) * plane;
                let scale = gv[ch] * saved.inv_std[ch];
                if saved.train {
                    let (sd, sdx) = (sum_dy[ch] * inv_count, sum_dy_xhat[ch] * inv_count);
                    for ((o, &d), &xh) in gx[range.clone()]
                        .iter_mut()
                        .zip(&gy[range.clone()])
                        .zip(&saved.xhat[range])
                    {
                        *o = scale * (d - sd - xh * sdx);
                    }
                } else {
                    for (o, &d) in gx[range.clone()].iter_mut().zip(&gy[range]) {
                        *o = scale * d;
                    }
                }
            }
        }
        sink.add_owned(x, gx);
    }
    sink.add_owned(gamma, sum_dy_xhat);
    sink.add_owned(beta, sum_dy);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(x: Tensor<f64>, gamma: f64, beta: f64, mode: BnMode) -> (Tensor<f64>, Option<BatchStats<f64>>) {
        let c = x.dims()[1];
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(x);
        let g = tape.constant(Tensor::full(&[c], gamma).unwrap());
        let b = tape.constant(Tensor::full(&[c], beta).unwrap());
        let rm = Tensor::zeros(&[c]).unwrap();
        let rv = Tensor::full(&[c], 1.0).unwrap();
        let (y, stats) = tape.batchnorm2d(xv, g, b, &rm, &rv, mode, BN_EPSILON).unwrap();
        (tape.value(y).clone(), stats)
    }

    #[test]
    fn gamma_zero_gives_beta() {
        let x = Tensor::from_fn(&[2, 3, 2, 2], |i| (i as f64 * 0.37).sin()).unwrap();
        let (y, _) = run(x, 0.0, 0.25, BnMode::Train);
        assert!(y.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn eval_mode_with_unit_stats_is_near_identity() {
        let x = Tensor::from_fn(&[1, 2, 2, 2], |i| i as f64).unwrap();
        let (y, stats) = run(x.clone(), 1.0, 0.0, BnMode::Eval);
        assert!(stats.is_none());
        assert!(y.max_abs_diff(&x) < 1e-4);
    }

    #[test]
    fn running_update_uses_momentum() {
        let stats = BatchStats {
            mean: vec![1.0],
            var: vec![3.0],
        };
        let (mut rm, mut rv) = (vec![0.0], vec![1.0]);
        stats.update_running(&mut rm, &mut rv, BN_MOMENTUM);
        assert!((rm[0] - 0.1_f64).abs() < 1e-12);
        assert!((rv[0] - 1.2_f64).abs() < 1e-12);
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::zeros(&[1, 3, 2, 2]).unwrap());
        let g = tape.constant(Tensor::zeros(&[2]).unwrap());
        let rm = Tensor::zeros(&[3]).unwrap();
        let r = tape.batchnorm2d(x, g, g, &rm, &rm, BnMode::Train, BN_EPSILON);
        assert!(matches!(r, Err(Error::Shape(_))));
    }
}

