//! End-to-end jobs behind the command-line tool.

pub mod check;
pub mod eval;
pub mod infer;
pub mod synth;
pub mod train;

pub use check::{network_gradcheck, NetworkObjective, NETWORK_STEP};
pub use eval::{run_eval, worker_count, EvalOutput};
pub use infer::{gates_csv_header, inspect_gates, run_forward, ForwardReport, GateRow};
pub use synth::{generate, write_dataset, SyntheticSample};
pub use train::{learning_rate, run_train_toy, train, TrainConfig, TrainReport, TrainingSet};

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{load_image, load_weights, Raster};
use crate::model::AcfNet;
use crate::nn::weights::ModelWeights;
use crate::tensor::Tensor;

/// Loads weights and checks them against the network layout.
pub fn load_model_weights(net: &AcfNet, path: &Path) -> Result<ModelWeights<f32>> {
    let w = load_weights(path)?;
    net.check_weights(&w)
        .map_err(|e| Error::parse(path, 0, format!("weights do not fit the network: {e}")))?;
    Ok(w)
}

fn load_channels(path: &Path, channels: usize) -> Result<Raster> {
    let r = load_image(path)?;
    if r.channels != channels {
        return Err(Error::parse(
            path,
            0,
            format!("expected {channels} channel(s), found {}", r.channels),
        ));
    }
    Ok(r)
}

/// RGB and depth images as 1×3×H×W and 1×1×H×W tensors of equal size.
pub fn load_pair(rgb: &Path, depth: &Path) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let r = load_channels(rgb, 3)?;
    let d = load_channels(depth, 1)?;
    if (r.width, r.height) != (d.width, d.height) {
        return Err(Error::dataset(format!(
            "{} is {}×{} but {} is {}×{}",
            rgb.display(),
            r.width,
            r.height,
            depth.display(),
            d.width,
            d.height
        )));
    }
    Ok((r.to_tensor(), d.to_tensor()))
}
