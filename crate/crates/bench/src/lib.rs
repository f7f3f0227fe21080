//! Seeded inputs shared by the benchmarks.

use acfnet::metrics::GrayMap;
use acfnet::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform tensor in [-1, 1).
pub fn random_tensor(dims: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(dims, |_| rng.random_range(-1.0..1.0)).expect("valid dims")
}

/// A blurred-disc prediction and its binary mask.
pub fn map_pair(side: usize, seed: u64) -> (GrayMap, GrayMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = side as f64 / 2.0;
    let r = side as f64 * rng.random_range(0.2..0.35);
    let mut pred = Vec::with_capacity(side * side);
    let mut gt = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
            gt.push(if d <= r { 1.0 } else { 0.0 });
            let soft = 1.0 / (1.0 + ((d - r) / 3.0).exp());
            pred.push((soft + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0));
        }
    }
    (
        GrayMap::new(side, side, pred).expect("values in range"),
        GrayMap::new(side, side, gt).expect("values in range"),
    )
}
