//! Straightforward reference implementations of the saliency metrics, written
//! pixel by pixel on 2-D grids without sharing any library code.

#![allow(dead_code)]

pub struct Pair {
    pub w: usize,
    pub h: usize,
    pub p: Vec<Vec<f64>>,
    pub g: Vec<Vec<bool>>,
}

impl Pair {
    pub fn new(w: usize, h: usize, p: &[f64], g: &[f64]) -> Self {
        let p = (0..h).map(|r| p[r * w..(r + 1) * w].to_vec()).collect();
        let g = (0..h).map(|r| g[r * w..(r + 1) * w].iter().map(|&v| v >= 0.5).collect()).collect();
        Self { w, h, p, g }
    }

    fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.h).flat_map(move |r| (0..self.w).map(move |c| (r, c)))
    }

    fn count(&self) -> f64 {
        (self.w * self.h) as f64
    }

    fn fg_count(&self) -> usize {
        self.pixels().filter(|&(r, c)| self.g[r][c]).count()
    }

    fn mean_p(&self) -> f64 {
        self.pixels().map(|(r, c)| self.p[r][c]).sum::<f64>() / self.count()
    }
}

pub fn mae(x: &Pair) -> f64 {
    x.pixels()
        .map(|(r, c)| (x.p[r][c] - if x.g[r][c] { 1.0 } else { 0.0 }).abs())
        .sum::<f64>()
        / x.count()
}

/// Precision and recall of `p >= t`.
pub fn precision_recall(x: &Pair, t: f64) -> (f64, f64) {
    let (mut tp, mut fp, mut pos) = (0usize, 0usize, 0usize);
    for (r, c) in x.pixels() {
        let pred = x.p[r][c] >= t;
        if x.g[r][c] {
            pos += 1;
            if pred {
                tp += 1;
            }
        } else if pred {
            fp += 1;
        }
    }
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if pos == 0 { 1.0 } else { tp as f64 / pos as f64 };
    (precision, recall)
}

pub fn f_beta(p: f64, r: f64) -> f64 {
    let b2 = 0.3;
    if b2 * p + r == 0.0 {
        0.0
    } else {
        (1.0 + b2) * p * r / (b2 * p + r)
    }
}

pub fn curve(x: &Pair) -> Vec<(f64, f64)> {
    (0..=255).map(|k| precision_recall(x, k as f64 / 255.0)).collect()
}

/// Index of the adaptive threshold on the 1/255 grid (at least 1).
pub fn adaptive_index(x: &Pair) -> usize {
    let t = (2.0 * x.mean_p()).min(1.0);
    let mut k = 1;
    while k < 255 && (k as f64 / 255.0) < t {
        k += 1;
    }
    k
}

pub fn f_max_avg(x: &Pair) -> (f64, f64) {
    let scores: Vec<f64> = curve(x).into_iter().map(|(p, r)| f_beta(p, r)).collect();
    let best = scores.iter().cloned().fold(0.0, f64::max);
    (best, scores[adaptive_index(x)])
}

pub fn e_measure(x: &Pair) -> f64 {
    let t = adaptive_index(x) as f64 / 255.0;
    let n = x.count();
    let fm: Vec<Vec<f64>> = x.p.iter().map(|row| row.iter().map(|&v| if v >= t { 1.0 } else { 0.0 }).collect()).collect();
    let gt: Vec<Vec<f64>> = x.g.iter().map(|row| row.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()).collect();
    let fg = x.fg_count();
    let mut total = 0.0;
    if fg == 0 {
        for (r, c) in x.pixels() {
            total += 1.0 - fm[r][c];
        }
    } else if fg == x.w * x.h {
        for (r, c) in x.pixels() {
            total += fm[r][c];
        }
    } else {
        let mu_fm = fm.iter().flatten().sum::<f64>() / n;
        let mu_gt = gt.iter().flatten().sum::<f64>() / n;
        for (r, c) in x.pixels() {
            let a = fm[r][c] - mu_fm;
            let b = gt[r][c] - mu_gt;
            let xi = 2.0 * a * b / (a * a + b * b + f64::EPSILON);
            let phi = (1.0 + xi).powi(2) / 4.0;
            total += phi;
        }
    }
    total / n
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let ss: f64 = v.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (v.len() - 1) as f64).sqrt()
}

fn s_object_score(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    2.0 * m / (m.powi(2) + 1.0 + sample_std(v) + f64::EPSILON)
}

fn ssim_block(x: &Pair, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> f64 {
    let mut pv = Vec::new();
    let mut gv = Vec::new();
    for r in rows {
        for c in cols.clone() {
            pv.push(x.p[r][c]);
            gv.push(if x.g[r][c] { 1.0 } else { 0.0 });
        }
    }
    let n = pv.len();
    if n == 0 {
        return 0.0;
    }
    let mx = pv.iter().sum::<f64>() / n as f64;
    let my = gv.iter().sum::<f64>() / n as f64;
    let d = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let vx = pv.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / d;
    let vy = gv.iter().map(|b| (b - my).powi(2)).sum::<f64>() / d;
    let cxy = pv.iter().zip(&gv).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / d;
    let num = 4.0 * mx * my * cxy;
    let den = (mx * mx + my * my) * (vx + vy);
    if num != 0.0 {
        num / (den + f64::EPSILON)
    } else if den == 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn s_measure(x: &Pair) -> f64 {
    let fg = x.fg_count();
    let q = if fg == 0 {
        1.0 - x.mean_p()
    } else if fg == x.w * x.h {
        x.mean_p()
    } else {
        let mut fg_vals = Vec::new();
        let mut bg_vals = Vec::new();
        for (r, c) in x.pixels() {
            if x.g[r][c] {
                fg_vals.push(x.p[r][c]);
            } else {
                bg_vals.push(1.0 - x.p[r][c]);
            }
        }
        let u = fg as f64 / x.count();
        let so = u * s_object_score(&fg_vals) + (1.0 - u) * s_object_score(&bg_vals);

        // Centroid in 1-based coordinates, rounded half away from zero.
        let rows: Vec<f64> = x.pixels().filter(|&(r, c)| x.g[r][c]).map(|(r, _)| r as f64 + 1.0).collect();
        let cols: Vec<f64> = x.pixels().filter(|&(r, c)| x.g[r][c]).map(|(_, c)| c as f64 + 1.0).collect();
        let cy = (rows.iter().sum::<f64>() / rows.len() as f64).round() as usize;
        let cx = (cols.iter().sum::<f64>() / cols.len() as f64).round() as usize;
        let area = x.count();
        let tl = (cx * cy) as f64 / area;
        let tr = ((x.w - cx) * cy) as f64 / area;
        let bl = (cx * (x.h - cy)) as f64 / area;
        let br = ((x.w - cx) * (x.h - cy)) as f64 / area;
        let sr = tl * ssim_block(x, 0..cy, 0..cx)
            + tr * ssim_block(x, 0..cy, cx..x.w)
            + bl * ssim_block(x, cy..x.h, 0..cx)
            + br * ssim_block(x, cy..x.h, cx..x.w);
        0.5 * so + 0.5 * sr
    };
    q.clamp(0.0, 1.0)
}

/// Brute-force nearest foreground pixel; ties go to the first in row-major order.
pub fn nearest_foreground(x: &Pair, r: usize, c: usize) -> Option<((usize, usize), f64)> {
    let mut best: Option<((usize, usize), f64)> = None;
    for (fr, fc) in x.pixels() {
        if !x.g[fr][fc] {
            continue;
        }
        let d2 = (fr as f64 - r as f64).powi(2) + (fc as f64 - c as f64).powi(2);
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some(((fr, fc), d2));
        }
    }
    best.map(|(p, d2)| (p, d2.sqrt()))
}

pub fn weighted_f(x: &Pair) -> f64 {
    if x.fg_count() == 0 {
        return 0.0;
    }
    let gv = |r: usize, c: usize| if x.g[r][c] { 1.0 } else { 0.0 };
    let e: Vec<Vec<f64>> = (0..x.h).map(|r| (0..x.w).map(|c| (x.p[r][c] - gv(r, c)).abs()).collect()).collect();
    let mut et = e.clone();
    let mut dist = vec![vec![0.0; x.w]; x.h];
    for (r, c) in x.pixels() {
        if !x.g[r][c] {
            let ((nr, nc), d) = nearest_foreground(x, r, c).unwrap();
            et[r][c] = e[nr][nc];
            dist[r][c] = d;
        }
    }
    let mut kernel = [[0.0; 7]; 7];
    let mut ksum = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 3.0, j as f64 - 3.0);
            *v = (-(dx * dx + dy * dy) / 50.0).exp();
            ksum += *v;
        }
    }
    let mut ea = vec![vec![0.0; x.w]; x.h];
    for (r, c) in x.pixels() {
        let mut acc = 0.0;
        for (i, row) in kernel.iter().enumerate() {
            for (j, k) in row.iter().enumerate() {
                let rr = r as i64 + i as i64 - 3;
                let cc = c as i64 + j as i64 - 3;
                if rr >= 0 && cc >= 0 && (rr as usize) < x.h && (cc as usize) < x.w {
                    acc += k / ksum * et[rr as usize][cc as usize];
                }
            }
        }
        ea[r][c] = acc;
    }
    let mut tp_loss = 0.0;
    let mut fp_w = 0.0;
    let fg = x.fg_count() as f64;
    for (r, c) in x.pixels() {
        if x.g[r][c] {
            tp_loss += e[r][c].min(ea[r][c]);
        } else {
            let b = 2.0 - (0.5f64.ln() / 5.0 * dist[r][c]).exp();
            fp_w += e[r][c] * b;
        }
    }
    let eps = f64::EPSILON;
    let tpw = fg - tp_loss;
    let recall = 1.0 - tp_loss / fg;
    let precision = tpw / (eps + tpw + fp_w);
    (2.0 * recall * precision / (eps + recall + precision)).clamp(0.0, 1.0)
}
