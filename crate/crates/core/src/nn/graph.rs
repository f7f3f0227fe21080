use std::collections::HashMap;

use crate::error::Result;
use crate::nn::weights::ModelWeights;
use crate::ops::batchnorm::{BatchStats, BnMode, BN_MOMENTUM};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// One forward pass: a tape, the weights it reads, and the batch-norm mode.
///
/// Parameters are placed on the tape lazily, once per name, so gradients of
/// shared parameters accumulate under a single entry.
pub struct Graph<'w, T: Scalar = f32> {
    pub tape: Tape<T>,
    weights: &'w ModelWeights<T>,
    mode: BnMode,
    params: HashMap<String, Var>,
    stats: Vec<(String, BatchStats<T>)>,
}

impl<'w, T: Scalar> Graph<'w, T> {
    /// Differentiable pass.
    pub fn new(weights: &'w ModelWeights<T>, mode: BnMode) -> Self {
        Self {
            tape: Tape::new(),
            weights,
            mode,
            params: HashMap::new(),
            stats: Vec::new(),
        }
    }

    /// Forward-only pass in eval mode.
    pub fn inference(weights: &'w ModelWeights<T>) -> Self {
        Self {
            tape: Tape::inference(),
            weights,
            mode: BnMode::Eval,
            params: HashMap::new(),
            stats: Vec::new(),
        }
    }

    pub fn mode(&self) -> BnMode {
        self.mode
    }

    pub fn weights(&self) -> &'w ModelWeights<T> {
        self.weights
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = self.weights.require(name)?.clone();
        let v = self.tape.param(name, t);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Non-differentiable lookup (running statistics).
    pub fn buffer(&self, name: &str) -> Result<&'w Tensor<T>> {
        self.weights.require(name)
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.tape.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        self.tape.value(v)
    }

    pub(crate) fn record_stats(&mut self, prefix: &str, stats: BatchStats<T>) {
        self.stats.push((prefix.to_string(), stats));
    }

    /// Batch statistics collected in train mode, keyed by batch-norm prefix.
    pub fn batch_stats(&self) -> &[(String, BatchStats<T>)] {
        &self.stats
    }

    /// Folds the collected batch statistics into `weights`' running buffers.
    pub fn apply_running_stats(&self, weights: &mut ModelWeights<T>) {
        apply_running_stats(weights, &self.stats);
    }

    /// Moves the collected batch statistics out of the pass.
    pub fn take_batch_stats(&mut self) -> Vec<(String, BatchStats<T>)> {
        std::mem::take(&mut self.stats)
    }
}

/// Folds batch statistics into the running buffers of `weights`.
pub fn apply_running_stats<T: Scalar>(weights: &mut ModelWeights<T>, stats: &[(String, BatchStats<T>)]) {
    for (prefix, stats) in stats {
        let mean_name = format!("{prefix}.running_mean");
        let var_name = format!("{prefix}.running_var");
        let mut mean = weights.get(&mean_name).expect("declared buffer").clone();
        let mut var = weights.get(&var_name).expect("declared buffer").clone();
        stats.update_running(mean.data_mut(), var.data_mut(), BN_MOMENTUM);
        *weights.get_mut(&mean_name).unwrap() = mean;
        *weights.get_mut(&var_name).unwrap() = var;
    }
}
