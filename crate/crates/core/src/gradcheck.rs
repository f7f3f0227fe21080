//! Central-difference verification of analytic gradients.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::weights::ModelWeights;
use crate::tensor::Tensor;

/// A scalar function of a parameter store, evaluated in 64-bit.
pub trait Objective {
    fn loss(&mut self, params: &ModelWeights<f64>) -> Result<f64>;

    /// Loss plus the analytic gradient of every trainable parameter.
    fn loss_and_grad(
        &mut self,
        params: &ModelWeights<f64>,
    ) -> Result<(f64, BTreeMap<String, Tensor<f64>>)>;
}

/// Adapts a pair of closures into an [`Objective`].
pub struct FnObjective<L, G> {
    pub loss: L,
    pub grad: G,
}

impl<L, G> Objective for FnObjective<L, G>
where
    L: FnMut(&ModelWeights<f64>) -> Result<f64>,
    G: FnMut(&ModelWeights<f64>) -> Result<(f64, BTreeMap<String, Tensor<f64>>)>,
{
    fn loss(&mut self, params: &ModelWeights<f64>) -> Result<f64> {
        (self.loss)(params)
    }

    fn loss_and_grad(
        &mut self,
        params: &ModelWeights<f64>,
    ) -> Result<(f64, BTreeMap<String, Tensor<f64>>)> {
        (self.grad)(params)
    }
}

#[derive(Clone, Debug)]
pub struct CheckConfig {
    /// Central-difference step.
    pub h: f64,
    /// Maximum relative error per coordinate.
    pub tol: f64,
    /// Minimum number of sampled coordinates.
    pub samples: usize,
    pub seed: u64,
    /// Gradients below this magnitude are compared on an absolute scale.
    pub abs_floor: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-4,
            tol: 1e-3,
            samples: 200,
            seed: 0,
            abs_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub loss: f64,
    pub tol: f64,
    pub coords: Vec<CoordCheck>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.coords.iter().all(|c| c.passed)
    }

    pub fn pass_rate(&self) -> f64 {
        if self.coords.is_empty() {
            return 1.0;
        }
        self.coords.iter().filter(|c| c.passed).count() as f64 / self.coords.len() as f64
    }

    pub fn max_rel_error(&self) -> f64 {
        self.coords.iter().map(|c| c.rel_error).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CoordCheck> {
        self.coords.iter().filter(|c| !c.passed)
    }

    /// Number of distinct parameter tensors touched.
    pub fn tensors_covered(&self) -> usize {
        self.coords.iter().map(|c| &c.name).collect::<BTreeSet<_>>().len()
    }
}

pub fn relative_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(abs_floor)
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation(format!("{what} is not finite ({v})")))
    }
}

/// Compares analytic gradients with `(f(θ+h) − f(θ−h)) / 2h` on a seeded
/// sample of coordinates: one from every parameter tensor that has a
/// gradient, then uniformly over all coordinates until `cfg.samples` is met.
pub fn finite_diff_check(
    objective: &mut impl Objective,
    params: &ModelWeights<f64>,
    cfg: &CheckConfig,
) -> Result<CheckReport> {
    if cfg.h.is_nan() || cfg.h <= 0.0 || cfg.tol.is_nan() || cfg.tol <= 0.0 {
        return Err(Error::argument("step and tolerance must be positive"));
    }
    let (loss, grads) = objective.loss_and_grad(params)?;
    finite(loss, "loss")?;

    let tensors: Vec<(&String, &Tensor<f64>)> = grads
        .iter()
        .filter(|(name, _)| params.get(name).is_some())
        .collect();
    if tensors.is_empty() {
        return Err(Error::argument("objective reported no parameter gradients"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut chosen: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (t, (_, g)) in tensors.iter().enumerate() {
        chosen.insert((t, rng.random_range(0..g.len())));
    }
    let total: usize = tensors.iter().map(|(_, g)| g.len()).sum();
    let target = cfg.samples.min(total);
    while chosen.len() < target {
        let mut flat = rng.random_range(0..total);
        for (t, (_, g)) in tensors.iter().enumerate() {
            if flat < g.len() {
                chosen.insert((t, flat));
                break;
            }
            flat -= g.len();
        }
    }

    let mut probe = params.clone();
    let mut coords = Vec::with_capacity(chosen.len());
    for (t, index) in chosen {
        let (name, grad) = tensors[t];
        let original = probe.get(name).expect("filtered above").data()[index];
        probe.get_mut(name).unwrap().data_mut()[index] = original + cfg.h;
        let plus = finite(objective.loss(&probe)?, "perturbed loss")?;
        probe.get_mut(name).unwrap().data_mut()[index] = original - cfg.h;
        let minus = finite(objective.loss(&probe)?, "perturbed loss")?;
        probe.get_mut(name).unwrap().data_mut()[index] = original;

        let numeric = (plus - minus) / (2.0 * cfg.h);
        let analytic = grad.data()[index];
        let rel_error = relative_error(analytic, numeric, cfg.abs_floor);
        coords.push(CoordCheck {
            name: name.clone(),
            index,
            analytic,
            numeric,
            rel_error,
            passed: rel_error <= cfg.tol,
        });
    }
    Ok(CheckReport {
        loss,
        tol: cfg.tol,
        coords,
    })
}
