//! Differentiable tensor operations.

pub mod batchnorm;
pub mod conv;
pub mod elementwise;
pub mod loss;
pub mod pool;
pub mod resize;
pub mod structural;

use crate::tape::{GradSink, Node, Op};
use crate::tensor::Scalar;

pub(crate) fn backward_node<T: Scalar>(sink: &mut GradSink<'_, T>, node: &Node<T>, gy: &[T]) {
    match &node.op {
        Op::Leaf { .. } => {}
        Op::Conv2d {
            x,
            kernel,
            bias,
            geom,
            cols,
        } => conv::backward(sink, *x, *kernel, *bias, *geom, cols, gy),
        Op::BatchNorm {
            x,
            gamma,
            beta,
            saved,
        } => batchnorm::backward(sink, *x, *gamma, *beta, saved, gy),
        Op::Pool { x, kind, argmax } => pool::backward(sink, *x, *kind, argmax, gy),
        Op::Resize { x, plan } => resize::backward(sink, *x, plan, gy),
        op @ (Op::Concat(_) | Op::SliceChannels { .. } | Op::Linear { .. }) => {
            structural::backward(sink, op, gy)
        }
        op @ (Op::Bce { .. } | Op::Iou { .. }) => loss::backward(sink, op, gy),
        op => elementwise::backward(sink, op, &node.value, gy),
    }
}
