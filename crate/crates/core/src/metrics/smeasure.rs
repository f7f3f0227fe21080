use super::GrayMap;
use crate::error::Result;

/// Weight of the object term.
pub const S_ALPHA: f64 = 0.5;

/// Structure measure `α·S_o + (1 − α)·S_r`, clamped to [0, 1].
pub fn s_measure(p: &GrayMap, g: &GrayMap) -> Result<f64> {
    p.check_same(g)?;
    let mask = g.binarize();
    let fg = mask.iter().filter(|&&m| m).count();
    let q = if fg == 0 {
        1.0 - p.mean()
    } else if fg == mask.len() {
        p.mean()
    } else {
        S_ALPHA * object(p, &mask) + (1.0 - S_ALPHA) * region(p, &mask)
    };
    Ok(q.clamp(0.0, 1.0))
}

fn object(p: &GrayMap, mask: &[bool]) -> f64 {
    let fg: Vec<f64> = p.values().iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
    let bg: Vec<f64> = p.values().iter().zip(mask).filter(|(_, &m)| !m).map(|(&v, _)| 1.0 - v).collect();
    let u = fg.len() as f64 / mask.len() as f64;
    u * object_score(&fg) + (1.0 - u) * object_score(&bg)
}

fn object_score(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = if x.len() > 1 {
        (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    2.0 * mean / (mean * mean + 1.0 + std + f64::EPSILON)
}

fn region(p: &GrayMap, mask: &[bool]) -> f64 {
    let (w, h) = (p.width(), p.height());
    let (mut total, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for r in 0..h {
        for c in 0..w {
            if mask[r * w + c] {
                total += 1.0;
                sx += (c + 1) as f64;
                sy += (r + 1) as f64;
            }
        }
    }
    // 1-based centroid; rows/cols [0, y) and [0, x) form the top-left block.
    let x = (sx / total).round() as usize;
    let y = (sy / total).round() as usize;
    let area = (w * h) as f64;
    let w1 = (x * y) as f64 / area;
    let w2 = ((w - x) * y) as f64 / area;
    let w3 = (x * (h - y)) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    let gt = |r: usize, c: usize| if mask[r * w + c] { 1.0 } else { 0.0 };
    let block = |r0: usize, r1: usize, c0: usize, c1: usize| {
        let mut pv = Vec::with_capacity((r1 - r0) * (c1 - c0));
        let mut gv = Vec::with_capacity(pv.capacity());
        for r in r0..r1 {
            for c in c0..c1 {
                pv.push(p.at(r, c));
                gv.push(gt(r, c));
            }
        }
        ssim(&pv, &gv)
    };
    w1 * block(0, y, 0, x) + w2 * block(0, y, x, w) + w3 * block(y, h, 0, x) + w4 * block(y, h, x, w)
}

fn ssim(p: &[f64], g: &[f64]) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    let n = p.len() as f64;
    let mx = p.iter().sum::<f64>() / n;
    let my = g.iter().sum::<f64>() / n;
    let div = (n - 1.0).max(1.0);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in p.iter().zip(g) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    let (sxx, syy, sxy) = (sxx / div, syy / div, sxy / div);
    let alpha = 4.0 * mx * my * sxy;
    let beta = (mx * mx + my * my) * (sxx + syy);
    if alpha != 0.0 {
        alpha / (beta + f64::EPSILON)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}
