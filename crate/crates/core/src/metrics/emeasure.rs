use super::{adaptive_threshold_index, GrayMap, PrCurve};
use crate::error::Result;

/// Enhanced-alignment measure of `p` binarized at the adaptive threshold.
pub fn e_measure(p: &GrayMap, g: &GrayMap) -> Result<f64> {
    p.check_same(g)?;
    let t = PrCurve::threshold(adaptive_threshold_index(p));
    let fm: Vec<f64> = p.values().iter().map(|&v| if v >= t { 1.0 } else { 0.0 }).collect();
    let gt: Vec<f64> = g.binarize().into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect();
    let n = gt.len() as f64;
    let fg: f64 = gt.iter().sum();
    let enhanced: f64 = if fg == 0.0 {
        fm.iter().map(|v| 1.0 - v).sum()
    } else if fg == n {
        fm.iter().sum()
    } else {
        let mg = fg / n;
        let mp = fm.iter().sum::<f64>() / n;
        fm.iter()
            .zip(&gt)
            .map(|(&x, &y)| {
                let (dp, dg) = (x - mp, y - mg);
                let align = 2.0 * dg * dp / (dg * dg + dp * dp + f64::EPSILON);
                (align + 1.0) * (align + 1.0) / 4.0
            })
            .sum()
    };
    Ok(enhanced / n)
}
