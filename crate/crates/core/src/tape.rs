//! Reverse-mode differentiation over a linear recording of tensor operations.
//!
//! Every forward op appends a [`Node`] whose inputs already exist on the tape,
//! so the recording is topologically ordered by construction and `backward`
//! is a single reverse sweep.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ops::batchnorm::BnSaved;
use crate::ops::conv::ConvGeometry;
use crate::ops::pool::PoolKind;
use crate::ops::resize::ResizePlan;
use crate::tensor::{Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T> {
    Leaf {
        name: Option<String>,
    },
    Conv2d {
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
        /// im2col buffers per batch item; empty for pointwise convolutions.
        cols: Vec<T>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        saved: BnSaved<T>,
    },
    Relu(Var),
    Sigmoid(Var),
    Pool {
        x: Var,
        kind: PoolKind,
        argmax: Vec<u32>,
    },
    Resize {
        x: Var,
        plan: ResizePlan,
    },
    Concat(Vec<Var>),
    SliceChannels {
        x: Var,
        start: usize,
    },
    Linear {
        x: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Reshape(Var),
    Add(Var, Var),
    Mul(Var, Var),
    ScaleConst(Var, T),
    /// Per-batch-item scalar times an N×… tensor.
    ScaleBatch {
        x: Var,
        s: Var,
    },
    /// N×C×H×W tensor times an N×1×H×W map, broadcast over channels.
    MulPlanes {
        x: Var,
        m: Var,
    },
    Sum(Var),
    Mean(Var),
    Bce {
        p: Var,
        target: Tensor<T>,
        eps: T,
    },
    Iou {
        p: Var,
        target: Tensor<T>,
    },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf { .. } => vec![],
            Op::Conv2d {
                x, kernel, bias, ..
            } => {
                let mut v = vec![*x, *kernel];
                v.extend(bias);
                v
            }
            Op::BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Reshape(x)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::ScaleConst(x, _) => vec![*x],
            Op::Pool { x, .. }
            | Op::Resize { x, .. }
            | Op::SliceChannels { x, .. }
            | Op::Bce { p: x, .. }
            | Op::Iou { p: x, .. } => vec![*x],
            Op::Concat(xs) => xs.clone(),
            Op::Linear { x, weight, bias } => {
                let mut v = vec![*x, *weight];
                v.extend(bias);
                v
            }
            Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::ScaleBatch { x, s } => vec![*x, *s],
            Op::MulPlanes { x, m } => vec![*x, *m],
        }
    }
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op<T>,
}

/// Single-owner recording of a forward computation.
pub struct Tape<T: Scalar = f32> {
    pub(crate) nodes: Vec<Node<T>>,
    /// When false, ops skip saving state that only backward needs.
    record: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            record: true,
        }
    }

    /// A tape for inference only: no gradient state is kept.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            record: false,
        }
    }

    pub(crate) fn recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant input (no gradient).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_node(value, false, Op::Leaf { name: None })
    }

    /// Records an unnamed input whose gradient is wanted.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push_node(value, self.record, Op::Leaf { name: None })
    }

    /// Records a named parameter; its gradient is reported under `name`.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor<T>) -> Var {
        self.push_node(
            value,
            self.record,
            Op::Leaf {
                name: Some(name.into()),
            },
        )
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn dims(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.dims()
    }

    pub(crate) fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let inputs = op.inputs();
        let requires_grad = self.record && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        if cfg!(debug_assertions)
            && !value.all_finite()
            && inputs.iter().all(|v| self.nodes[v.0].value.all_finite())
        {
            panic!("forward op produced a non-finite value from finite inputs");
        }
        // Drop saved state nobody will read.
        let op = if requires_grad { op } else { strip(op) };
        self.push_node(value, requires_grad, op)
    }

    fn push_node(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every named parameter on the tape gets an entry; parameters that do not
    /// influence the loss receive zeros. Fan-out contributions add up.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Ok(Gradients::default());
        }
        let loss_node = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| Error::argument(format!("loss {loss:?} is not on this tape")))?;
        if loss_node.value.len() != 1 {
            return Err(Error::argument(format!(
                "loss must be a scalar, got dims {:?}",
                loss_node.value.dims()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::ONE]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            if let Op::Leaf { .. } = node.op {
                grads[i] = Some(gy);
                continue;
            }
            let mut sink = GradSink {
                tape: self,
                grads: &mut grads,
            };
            crate::ops::backward_node(&mut sink, node, &gy);
        }

        let mut by_name = BTreeMap::new();
        let mut by_var = BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { name } = &node.op {
                if !node.requires_grad {
                    continue;
                }
                let g = grads
                    .get_mut(i)
                    .and_then(Option::take)
                    .unwrap_or_else(|| vec![T::ZERO; node.value.len()]);
                let g = Tensor::from_parts(node.value.dims().to_vec(), g);
                match name {
                    Some(name) => {
                        by_name
                            .entry(name.clone())
                            .and_modify(|acc: &mut Tensor<T>| {
                                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                                    *a += *b;
                                }
                            })
                            .or_insert(g);
                    }
                    None => {
                        by_var.insert(Var(i), g);
                    }
                }
            }
        }
        Ok(Gradients { by_name, by_var })
    }
}

fn strip<T>(op: Op<T>) -> Op<T> {
    match op {
        Op::Conv2d {
            x,
            kernel,
            bias,
            geom,
            ..
        } => Op::Conv2d {
            x,
            kernel,
            bias,
            geom,
            cols: Vec::new(),
        },
        Op::BatchNorm { x, gamma, beta, .. } => Op::BatchNorm {
            x,
            gamma,
            beta,
            saved: BnSaved::default(),
        },
        Op::Pool { x, kind, .. } => Op::Pool {
            x,
            kind,
            argmax: Vec::new(),
        },
        other => other,
    }
}

/// Accumulator handed to per-op backward kernels.
pub(crate) struct GradSink<'a, T: Scalar> {
    pub(crate) tape: &'a Tape<T>,
    grads: &'a mut Vec<Option<Vec<T>>>,
}

impl<T: Scalar> GradSink<'_, T> {
    pub(crate) fn wants(&self, var: Var) -> bool {
        self.tape.nodes[var.0].requires_grad
    }

    /// Mutable gradient buffer for `var`, zero-initialised on first use.
    pub(crate) fn buffer(&mut self, var: Var) -> &mut [T] {
        let len = self.tape.nodes[var.0].value.len();
        self.grads[var.0].get_or_insert_with(|| vec![T::ZERO; len])
    }

    pub(crate) fn add(&mut self, var: Var, g: &[T]) {
        if !self.wants(var) {
            return;
        }
        let buf = self.buffer(var);
        for (a, b) in buf.iter_mut().zip(g) {
            *a += *b;
        }
    }

    pub(crate) fn add_owned(&mut self, var: Var, g: Vec<T>) {
        if !self.wants(var) {
            return;
        }
        match &mut self.grads[var.0] {
            slot @ None => *slot = Some(g),
            Some(buf) => {
                for (a, b) in buf.iter_mut().zip(&g) {
                    *a += *b;
                }
            }
        }
    }
}

/// Result of [`Tape::backward`].
#[derive(Clone, Debug, Default)]
pub struct Gradients<T = f32> {
    by_name: BTreeMap<String, Tensor<T>>,
    by_var: BTreeMap<Var, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a named parameter.
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.by_name.get(name)
    }

    /// Gradient of an unnamed input leaf.
    pub fn of(&self, var: Var) -> Option<&Tensor<T>> {
        self.by_var.get(&var)
    }

    pub fn named(&self) -> &BTreeMap<String, Tensor<T>> {
        &self.by_name
    }

    pub fn into_named(self) -> BTreeMap<String, Tensor<T>> {
        self.by_name
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty() && self.by_var.is_empty()
    }
}
