#![allow(dead_code)]

pub mod oracles;

use std::collections::BTreeMap;

use acfnet::gradcheck::{finite_diff_check, CheckConfig, CheckReport, FnObjective};
use acfnet::{ModelWeights, Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(rng: &mut ChaCha8Rng, dims: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.random_range(lo..hi)).unwrap()
}

pub fn random_f32(rng: &mut ChaCha8Rng, dims: &[usize], lo: f32, hi: f32) -> Tensor<f32> {
    Tensor::from_fn(dims, |_| rng.random_range(lo..hi)).unwrap()
}

/// Scalar probe `sum(out ⊙ r)` for a fixed random `r`, so every output
/// element carries a distinct weight into the loss.
pub fn probe(tape: &mut Tape<f64>, out: Var, seed: u64) -> Var {
    let dims = tape.value(out).dims().to_vec();
    let mut r = rng(seed ^ 0x5eed);
    let w = random(&mut r, &dims, -1.0, 1.0);
    let wv = tape.constant(w);
    let prod = tape.mul(out, wv).unwrap();
    tape.sum(prod)
}

/// Finite-difference check of `build` with respect to every named input.
pub fn check_graph<F>(inputs: &[(&str, Tensor<f64>)], tol: f64, samples: usize, build: F) -> CheckReport
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut params = ModelWeights::new();
    for (name, t) in inputs {
        params.insert(*name, t.clone()).unwrap();
    }
    let names: Vec<String> = inputs.iter().map(|(n, _)| n.to_string()).collect();
    let eval = |p: &ModelWeights<f64>, grad: bool| -> Result<(f64, BTreeMap<String, Tensor<f64>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = names
            .iter()
            .map(|n| tape.param(n.clone(), p.get(n).unwrap().clone()))
            .collect();
        let out = build(&mut tape, &vars)?;
        let loss = if tape.value(out).len() == 1 { out } else { probe(&mut tape, out, 1) };
        let value = tape.value(loss).data()[0];
        if !grad {
            return Ok((value, BTreeMap::new()));
        }
        Ok((value, tape.backward(loss)?.into_named()))
    };
    let mut objective = FnObjective {
        loss: |p: &ModelWeights<f64>| Ok(eval(p, false)?.0),
        grad: |p: &ModelWeights<f64>| eval(p, true),
    };
    let cfg = CheckConfig {
        tol,
        samples,
        ..CheckConfig::default()
    };
    finite_diff_check(&mut objective, &params, &cfg).unwrap()
}

pub fn assert_passes(report: &CheckReport, what: &str) {
    let worst: Vec<_> = report.failures().take(5).collect();
    assert!(
        report.all_passed(),
        "{what}: {} of {} coordinates failed, e.g. {worst:?}",
        report.coords.iter().filter(|c| !c.passed).count(),
        report.coords.len()
    );
}

/// Random prediction and binary mask; `quantize` snaps predictions to the
/// 8-bit grid.
pub fn random_pair(r: &mut ChaCha8Rng, w: usize, h: usize, quantize: bool) -> (Vec<f64>, Vec<f64>) {
    let fg_rate: f64 = r.random_range(0.0..1.0);
    let g: Vec<f64> = (0..w * h).map(|_| if r.random_bool(fg_rate) { 1.0 } else { 0.0 }).collect();
    let p: Vec<f64> = (0..w * h)
        .map(|_| {
            let v: f64 = r.random_range(0.0..=1.0);
            if quantize { (v * 255.0).round() / 255.0 } else { v }
        })
        .collect();
    (p, g)
}
