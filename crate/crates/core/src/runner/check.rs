//! Finite-difference check of the complete network loss.
//!
//! Batch normalisation runs in eval mode. Train-mode statistics couple
//! every pixel of the batch, which packs ReLU and channel-max switch points
//! so densely that central differences stop resolving the derivative; the
//! train-mode backward pass is checked op by op instead. Weights are drawn
//! at He scale so activations keep unit magnitude through the unit running
//! statistics rather than shrinking towards the ReLU kinks.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::gradcheck::{finite_diff_check, CheckConfig, CheckReport, Objective};
use crate::model::{AcfNet, ForwardOptions};
use crate::nn::graph::Graph;
use crate::nn::weights::{is_trainable, ModelWeights};
use crate::ops::batchnorm::BnMode;
use crate::supervision::total_loss;
use crate::tensor::Tensor;

/// Total training loss of a fixed batch as a function of the weights.
pub struct NetworkObjective<'a> {
    pub net: &'a AcfNet,
    pub rgb: Tensor<f64>,
    pub depth: Tensor<f64>,
    pub gt: Tensor<f64>,
    pub opts: ForwardOptions,
}

impl NetworkObjective<'_> {
    fn run(&self, params: &ModelWeights<f64>, grad: bool) -> Result<(f64, BTreeMap<String, Tensor<f64>>)> {
        let mut g = Graph::new(params, BnMode::Eval);
        let out = self.net.forward(&mut g, &self.rgb, &self.depth, &self.opts)?;
        let (loss, breakdown) = total_loss(&mut g, &out, &self.gt)?;
        if !grad {
            return Ok((breakdown.total, BTreeMap::new()));
        }
        let grads = g
            .tape
            .backward(loss)?
            .into_named()
            .into_iter()
            .filter(|(n, _)| is_trainable(n))
            .collect();
        Ok((breakdown.total, grads))
    }
}

impl Objective for NetworkObjective<'_> {
    fn loss(&mut self, params: &ModelWeights<f64>) -> Result<f64> {
        Ok(self.run(params, false)?.0)
    }

    fn loss_and_grad(&mut self, params: &ModelWeights<f64>) -> Result<(f64, BTreeMap<String, Tensor<f64>>)> {
        self.run(params, true)
    }
}

/// Central-difference step suited to the network objective.
pub const NETWORK_STEP: f64 = 1e-5;

/// Fan-in bound scale of the checked weights (He uniform).
pub const CHECK_INIT_SCALE: f64 = 2.449_489_742_783_178;

/// Input side of the network check batch.
pub const CHECK_SIZE: usize = 32;
/// Items in the network check batch.
pub const CHECK_BATCH: usize = 2;

/// Checks the toy network's total loss on a seeded synthetic batch in
/// 64-bit arithmetic.
pub fn network_gradcheck(seed: u64, cfg: &CheckConfig) -> Result<CheckReport> {
    let net = AcfNet::toy();
    let params = net.registry().initialize_scaled(seed, CHECK_INIT_SCALE).cast::<f64>();
    let samples = super::synth::generate(CHECK_BATCH, CHECK_SIZE, seed)?;
    let stack = |f: &dyn Fn(&super::SyntheticSample) -> Tensor<f32>| -> Result<Tensor<f64>> {
        let items: Vec<Tensor<f64>> = samples.iter().map(|s| f(s).cast()).collect();
        Tensor::stack_batch(&items)
    };
    let mut objective = NetworkObjective {
        net: &net,
        rgb: stack(&|s| s.rgb.to_tensor())?,
        depth: stack(&|s| s.depth.to_tensor())?,
        gt: stack(&|s| s.gt.to_tensor())?,
        opts: ForwardOptions::default(),
    };
    finite_diff_check(&mut objective, &params, cfg)
}
