//! Toy-scale SGD training.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{load_gray, save_weights, DatasetLayout};
use crate::metrics::{self, GrayMap, ImageMetrics};
use crate::model::{AcfNet, ForwardOptions, INPUT_MULTIPLE};
use crate::nn::graph::{apply_running_stats, Graph};
use crate::nn::weights::{is_trainable, ModelWeights};
use crate::ops::batchnorm::BnMode;
use crate::supervision::{total_loss, LossBreakdown};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Fraction of all steps spent in linear warm-up.
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub flip_probability: f64,
}

impl TrainConfig {
    pub fn toy(epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            seed,
            base_lr: 1e-2,
            momentum: 0.9,
            weight_decay: 5e-4,
            warmup_fraction: 0.1,
            batch_size: 4,
            flip_probability: 0.5,
        }
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size.clamp(1, n.max(1)))
    }
}

/// Linear warm-up over the first `warmup_fraction` of `total` steps, then
/// linear decay towards zero. `step` is 0-based.
pub fn learning_rate(step: usize, total: usize, base: f64, warmup_fraction: f64) -> f64 {
    let warmup = ((total as f64 * warmup_fraction).ceil() as usize).clamp(1, total.max(1));
    if step < warmup {
        base * (step + 1) as f64 / warmup as f64
    } else {
        base * (total - step) as f64 / (total - warmup + 1) as f64
    }
}

/// Images of one size held in memory.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub stems: Vec<String>,
    pub rgb: Vec<Tensor<f32>>,
    pub depth: Vec<Tensor<f32>>,
    pub gt: Vec<Tensor<f32>>,
}

impl TrainingSet {
    pub fn load(layout: &DatasetLayout) -> Result<Self> {
        let mut set = Self {
            stems: Vec::new(),
            rgb: Vec::new(),
            depth: Vec::new(),
            gt: Vec::new(),
        };
        for s in layout.samples()? {
            let (rgb, depth) = super::load_pair(&s.rgb, &s.depth)?;
            let gt = load_gray(&s.gt)?;
            if rgb.dims()[2..] != [gt.height(), gt.width()] {
                return Err(Error::dataset(format!(
                    "{} does not match the size of its images",
                    s.gt.display()
                )));
            }
            set.stems.push(s.stem);
            set.rgb.push(rgb);
            set.depth.push(depth);
            set.gt.push(binary(&gt));
        }
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.rgb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rgb.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let Some(first) = self.rgb.first() else {
            return Err(Error::dataset("training set is empty"));
        };
        let hw = &first.dims()[2..];
        if self.rgb.iter().any(|t| &t.dims()[2..] != hw) {
            return Err(Error::dataset("training images differ in size"));
        }
        if hw[0] % INPUT_MULTIPLE != 0 || hw[1] % INPUT_MULTIPLE != 0 {
            return Err(Error::geometry(format!(
                "training images are {}×{}, not multiples of {INPUT_MULTIPLE}",
                hw[0], hw[1]
            )));
        }
        Ok(())
    }

    /// Eval-mode metrics of every training image against its mask.
    pub fn evaluate(&self, net: &AcfNet, weights: &ModelWeights<f32>) -> Result<Vec<ImageMetrics>> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let pred = net.predict(weights, &self.rgb[i], &self.depth[i], &ForwardOptions::default())?;
            let p = GrayMap::from_tensor(&pred.sal_f, 0)?;
            let g = GrayMap::from_tensor(&self.gt[i], 0)?;
            out.push(metrics::evaluate(&p, &g)?);
        }
        Ok(out)
    }
}

fn binary(map: &GrayMap) -> Tensor<f32> {
    let mask = map.binarize();
    Tensor::new(
        &[1, 1, map.height(), map.width()],
        mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
    )
    .expect("map dims are positive")
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub steps: usize,
    /// Loss of the last step (or of the initial weights when no step ran).
    pub final_loss: LossBreakdown,
    /// Total loss per step.
    pub history: Vec<f64>,
}

struct Batch {
    rgb: Tensor<f32>,
    depth: Tensor<f32>,
    gt: Tensor<f32>,
}

fn make_batch(data: &TrainingSet, idx: &[usize], rng: &mut ChaCha8Rng, flip_p: f64) -> Result<Batch> {
    let (mut rgb, mut depth, mut gt) = (Vec::new(), Vec::new(), Vec::new());
    for &i in idx {
        if rng.random_bool(flip_p) {
            rgb.push(data.rgb[i].flip_horizontal()?);
            depth.push(data.depth[i].flip_horizontal()?);
            gt.push(data.gt[i].flip_horizontal()?);
        } else {
            rgb.push(data.rgb[i].clone());
            depth.push(data.depth[i].clone());
            gt.push(data.gt[i].clone());
        }
    }
    Ok(Batch {
        rgb: Tensor::stack_batch(&rgb)?,
        depth: Tensor::stack_batch(&depth)?,
        gt: Tensor::stack_batch(&gt)?,
    })
}

/// SGD with momentum and weight decay, starting from `weights`.
pub fn train(
    net: &AcfNet,
    mut weights: ModelWeights<f32>,
    data: &TrainingSet,
    cfg: &TrainConfig,
) -> Result<(ModelWeights<f32>, TrainReport)> {
    data.validate()?;
    let n = data.len();
    let batch = cfg.batch_size.clamp(1, n);
    let total = cfg.epochs * cfg.steps_per_epoch(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity: ModelWeights<f32> = ModelWeights::new();
    for (name, t) in weights.iter().filter(|(n, _)| is_trainable(n)) {
        velocity.insert(name.clone(), Tensor::zeros(t.dims())?)?;
    }
    let mut history = Vec::with_capacity(total);
    let mut final_loss = None;
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(batch) {
            let b = make_batch(data, idx, &mut rng, cfg.flip_probability)?;
            let lr = learning_rate(step, total, cfg.base_lr, cfg.warmup_fraction) as f32;
            let (grads, stats, loss) = {
                let mut g = Graph::new(&weights, BnMode::Train);
                let out = net.forward(&mut g, &b.rgb, &b.depth, &ForwardOptions::default())?;
                let (l, breakdown) = total_loss(&mut g, &out, &b.gt)?;
                if !breakdown.total.is_finite() {
                    return Err(Error::Evaluation(format!("loss diverged at step {step}")));
                }
                (g.tape.backward(l)?, g.take_batch_stats(), breakdown)
            };
            let (mu, wd) = (cfg.momentum as f32, cfg.weight_decay as f32);
            for (name, v) in velocity.iter_mut() {
                let w = weights.get_mut(name).expect("velocity mirrors weights");
                let grad = grads.get(name);
                for (i, (vi, wi)) in v.data_mut().iter_mut().zip(w.data_mut()).enumerate() {
                    let gi = grad.map_or(0.0, |g| g.data()[i]) + wd * *wi;
                    *vi = mu * *vi + gi;
                    *wi -= lr * *vi;
                }
            }
            apply_running_stats(&mut weights, &stats);
            history.push(loss.total);
            final_loss = Some(loss);
            step += 1;
        }
    }
    let final_loss = match final_loss {
        Some(l) => l,
        None => initial_loss(net, &weights, data)?,
    };
    Ok((
        weights,
        TrainReport {
            steps: step,
            final_loss,
            history,
        },
    ))
}

/// Train-mode loss of the whole set as one batch, without updating anything.
fn initial_loss(net: &AcfNet, weights: &ModelWeights<f32>, data: &TrainingSet) -> Result<LossBreakdown> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let b = make_batch(data, &idx, &mut rng, 0.0)?;
    let mut g = Graph::new(weights, BnMode::Train);
    let out = net.forward(&mut g, &b.rgb, &b.depth, &ForwardOptions::default())?;
    Ok(total_loss(&mut g, &out, &b.gt)?.1)
}

/// Trains the toy network on `data_dir` from the seeded initialization and
/// writes the final weights to `out`.
pub fn run_train_toy(data_dir: &Path, epochs: usize, seed: u64, out: &Path) -> Result<TrainReport> {
    let data = TrainingSet::load(&DatasetLayout::new(data_dir))?;
    let net = AcfNet::toy();
    let (weights, report) = train(&net, net.init(seed), &data, &TrainConfig::toy(epochs, seed))?;
    save_weights(out, &weights)?;
    Ok(report)
}
