use super::GrayMap;
use crate::error::Result;

/// Number of thresholds `k / 255`, `k = 0..=255`.
pub const THRESHOLDS: usize = 256;
/// β² of the F-measure.
pub const F_BETA2: f64 = 0.3;

pub fn mae(p: &GrayMap, g: &GrayMap) -> Result<f64> {
    p.check_same(g)?;
    let sum: f64 = p.values().iter().zip(g.values()).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / p.len() as f64)
}

/// Precision and recall at each threshold; index `k` is threshold `k / 255`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

impl PrCurve {
    pub fn threshold(k: usize) -> f64 {
        k as f64 / 255.0
    }

    pub fn f_scores(&self) -> Vec<f64> {
        self.precision
            .iter()
            .zip(&self.recall)
            .map(|(&p, &r)| f_score(p, r, F_BETA2))
            .collect()
    }
}

/// `(1 + β²)·p·r / (β²·p + r)`, 0 when the denominator is 0.
pub fn f_score(precision: f64, recall: f64, beta2: f64) -> f64 {
    let den = beta2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / den
    }
}

/// Largest `k` with `k / 255 <= v`.
fn bin(v: f64) -> usize {
    let mut k = ((v * 255.0).floor() as usize).min(255);
    while k < 255 && v >= PrCurve::threshold(k + 1) {
        k += 1;
    }
    while k > 0 && v < PrCurve::threshold(k) {
        k -= 1;
    }
    k
}

/// Pixel `i` is predicted foreground at threshold `k` when `p[i] >= k / 255`.
/// Precision is 1 when nothing is predicted, recall is 1 when `g` is empty.
pub fn pr_curve(p: &GrayMap, g: &GrayMap) -> Result<PrCurve> {
    p.check_same(g)?;
    let mask = g.binarize();
    let mut fg_hist = [0u64; THRESHOLDS];
    let mut bg_hist = [0u64; THRESHOLDS];
    for (&v, &m) in p.values().iter().zip(&mask) {
        let h = if m { &mut fg_hist } else { &mut bg_hist };
        h[bin(v)] += 1;
    }
    let positives: u64 = fg_hist.iter().sum();
    let mut precision = vec![0.0; THRESHOLDS];
    let mut recall = vec![0.0; THRESHOLDS];
    let (mut tp, mut fp) = (0u64, 0u64);
    for k in (0..THRESHOLDS).rev() {
        tp += fg_hist[k];
        fp += bg_hist[k];
        precision[k] = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        recall[k] = if positives == 0 { 1.0 } else { tp as f64 / positives as f64 };
    }
    Ok(PrCurve { precision, recall })
}

/// Grid index of the adaptive threshold `min(2·mean(p), 1)`: the smallest
/// `k >= 1` with `k / 255` at or above it.
pub fn adaptive_threshold_index(p: &GrayMap) -> usize {
    let t = (2.0 * p.mean()).min(1.0);
    (1..THRESHOLDS).find(|&k| PrCurve::threshold(k) >= t).unwrap_or(THRESHOLDS - 1)
}

/// `(f_max, f_avg)`: the best F over the curve and F at the adaptive threshold.
pub fn f_measure(curve: &PrCurve, p: &GrayMap, g: &GrayMap) -> Result<(f64, f64)> {
    p.check_same(g)?;
    let scores = curve.f_scores();
    let f_max = scores.iter().copied().fold(0.0, f64::max);
    let f_avg = scores[adaptive_threshold_index(p)];
    Ok((f_max, f_avg))
}
