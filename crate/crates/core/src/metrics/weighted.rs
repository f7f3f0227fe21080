use super::GrayMap;
use crate::error::Result;

/// β² of the weighted F-measure.
pub const WF_BETA2: f64 = 1.0;
const GAUSS_SIZE: usize = 7;
const GAUSS_SIGMA: f64 = 5.0;

const INF: f64 = 1e20;

/// 1-D squared distance transform of `f` (lower envelope of parabolas).
fn dt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut k = 0;
    z[0] = -f64::INFINITY;
    z[1] = f64::INFINITY;
    let parabola = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in 1..n {
        let mut s = parabola(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = parabola(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance from every pixel to its nearest foreground pixel,
/// with the index of that pixel. Among equidistant candidates the one with
/// the lowest (row, column) wins. Returns `None` when `mask` has no foreground.
pub fn distance_transform(mask: &[bool], width: usize, height: usize) -> Option<(Vec<f64>, Vec<usize>)> {
    if !mask.iter().any(|&m| m) {
        return None;
    }
    let mut d2: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { INF }).collect();
    let mut col_in = vec![0.0; height];
    let mut col_out = vec![0.0; height];
    for c in 0..width {
        for r in 0..height {
            col_in[r] = d2[r * width + c];
        }
        dt_1d(&col_in, &mut col_out);
        for r in 0..height {
            d2[r * width + c] = col_out[r];
        }
    }
    let mut row_out = vec![0.0; width];
    for r in 0..height {
        dt_1d(&d2[r * width..(r + 1) * width], &mut row_out);
        d2[r * width..(r + 1) * width].copy_from_slice(&row_out);
    }
    let mut dist = vec![0.0; mask.len()];
    let mut idx = vec![0usize; mask.len()];
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            let sq = d2[i].round() as i64;
            dist[i] = (sq as f64).sqrt();
            idx[i] = nearest_at(mask, width, height, r as i64, c as i64, sq).expect("a pixel at the transform distance");
        }
    }
    Some((dist, idx))
}

/// First foreground pixel in (row, column) order at squared distance `sq`.
fn nearest_at(mask: &[bool], width: usize, height: usize, r: i64, c: i64, sq: i64) -> Option<usize> {
    let rad = (sq as f64).sqrt().ceil() as i64;
    for dy in -rad..=rad {
        let rest = sq - dy * dy;
        if rest < 0 {
            continue;
        }
        let dx = (rest as f64).sqrt().round() as i64;
        if dx * dx != rest {
            continue;
        }
        let y = r + dy;
        if y < 0 || y >= height as i64 {
            continue;
        }
        let cols = if dx == 0 { vec![c] } else { vec![c - dx, c + dx] };
        for x in cols {
            if x >= 0 && x < width as i64 {
                let i = y as usize * width + x as usize;
                if mask[i] {
                    return Some(i);
                }
            }
        }
    }
    None
}

fn gaussian_kernel() -> Vec<f64> {
    let half = (GAUSS_SIZE / 2) as f64;
    let mut k: Vec<f64> = (0..GAUSS_SIZE * GAUSS_SIZE)
        .map(|i| {
            let y = (i / GAUSS_SIZE) as f64 - half;
            let x = (i % GAUSS_SIZE) as f64 - half;
            (-(x * x + y * y) / (2.0 * GAUSS_SIGMA * GAUSS_SIGMA)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Zero-padded, same-size correlation with the 7×7 Gaussian.
fn smooth(src: &[f64], width: usize, height: usize) -> Vec<f64> {
    let k = gaussian_kernel();
    let half = (GAUSS_SIZE / 2) as i64;
    let mut out = vec![0.0; src.len()];
    for r in 0..height as i64 {
        for c in 0..width as i64 {
            let mut acc = 0.0;
            for ky in 0..GAUSS_SIZE as i64 {
                let y = r + ky - half;
                if y < 0 || y >= height as i64 {
                    continue;
                }
                for kx in 0..GAUSS_SIZE as i64 {
                    let x = c + kx - half;
                    if x < 0 || x >= width as i64 {
                        continue;
                    }
                    acc += k[(ky * GAUSS_SIZE as i64 + kx) as usize] * src[(y * width as i64 + x) as usize];
                }
            }
            out[(r * width as i64 + c) as usize] = acc;
        }
    }
    out
}

/// Weighted F-measure; 0 when the ground truth has no foreground.
pub fn weighted_f(p: &GrayMap, g: &GrayMap) -> Result<f64> {
    p.check_same(g)?;
    let (w, h) = (g.width(), g.height());
    let mask = g.binarize();
    let Some((dist, nearest)) = distance_transform(&mask, w, h) else {
        return Ok(0.0);
    };
    let err: Vec<f64> = p
        .values()
        .iter()
        .zip(&mask)
        .map(|(&v, &m)| (v - if m { 1.0 } else { 0.0 }).abs())
        .collect();
    let et: Vec<f64> = (0..err.len()).map(|i| if mask[i] { err[i] } else { err[nearest[i]] }).collect();
    let ea = smooth(&et, w, h);
    let ln_half = 0.5f64.ln();
    let (mut fg, mut ew_fg, mut ew_bg) = (0.0, 0.0, 0.0);
    for i in 0..err.len() {
        if mask[i] {
            fg += 1.0;
            ew_fg += if ea[i] < err[i] { ea[i] } else { err[i] };
        } else {
            let b = 2.0 - (ln_half / 5.0 * dist[i]).exp();
            ew_bg += err[i] * b;
        }
    }
    let eps = f64::EPSILON;
    let tpw = fg - ew_fg;
    let recall = 1.0 - ew_fg / fg;
    let precision = tpw / (eps + tpw + ew_bg);
    let q = (1.0 + WF_BETA2) * recall * precision / (eps + recall + WF_BETA2 * precision);
    Ok(q.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_transform() {
        let f = [INF, 0.0, INF, INF, INF, 0.0];
        let mut out = [0.0; 6];
        dt_1d(&f, &mut out);
        assert_eq!(out, [1.0, 0.0, 1.0, 4.0, 1.0, 0.0]);
    }

    #[test]
    fn ties_prefer_lowest_row_then_column() {
        // Foreground at (0,1) and (1,0); pixel (0,0) is 1 away from both.
        let mask = [false, true, true, false];
        let (dist, idx) = distance_transform(&mask, 2, 2).unwrap();
        assert_eq!(dist, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(idx[0], 1);
        assert_eq!(idx[3], 1);
    }

    #[test]
    fn kernel_is_normalized() {
        let s: f64 = gaussian_kernel().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }
}
