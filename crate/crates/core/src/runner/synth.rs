//! Seeded synthetic RGB-D scenes: one elliptical object in front of a
//! smoothly shaded background, with a matching binary mask.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{DatasetLayout, Raster};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticSample {
    pub stem: String,
    pub rgb: Raster,
    pub depth: Raster,
    pub gt: Raster,
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn sample(rng: &mut ChaCha8Rng, size: usize, stem: String) -> SyntheticSample {
    let s = size as f64;
    let cy = rng.random_range(0.35..0.65) * s;
    let cx = rng.random_range(0.35..0.65) * s;
    let ry = rng.random_range(0.15..0.28) * s;
    let rx = rng.random_range(0.15..0.28) * s;
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let (sin, cos) = angle.sin_cos();
    let bg_top: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.05..0.45));
    let bg_bottom: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.05..0.45));
    let fg: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.6..0.95));
    let far = rng.random_range(0.1..0.3);
    let near = rng.random_range(0.7..0.9);

    let mut rgb = Vec::with_capacity(size * size * 3);
    let mut depth = Vec::with_capacity(size * size);
    let mut gt = Vec::with_capacity(size * size);
    for r in 0..size {
        let t = r as f64 / (s - 1.0);
        for c in 0..size {
            let (dy, dx) = (r as f64 + 0.5 - cy, c as f64 + 0.5 - cx);
            let u = (dx * cos + dy * sin) / rx;
            let v = (-dx * sin + dy * cos) / ry;
            let inside = u * u + v * v <= 1.0;
            let noise = rng.random_range(-0.03..0.03);
            for ch in 0..3 {
                let base = if inside {
                    fg[ch]
                } else {
                    bg_top[ch] * (1.0 - t) + bg_bottom[ch] * t
                };
                rgb.push(to_u8(base + noise));
            }
            let d = if inside { near } else { far + 0.1 * t };
            depth.push(to_u8(d + rng.random_range(-0.02..0.02)));
            gt.push(if inside { 255 } else { 0 });
        }
    }
    SyntheticSample {
        stem,
        rgb: Raster::new(size, size, 3, rgb).expect("sizes agree"),
        depth: Raster::new(size, size, 1, depth).expect("sizes agree"),
        gt: Raster::new(size, size, 1, gt).expect("sizes agree"),
    }
}

/// `count` scenes of `size`×`size`, named `synth_000`, `synth_001`, ...
pub fn generate(count: usize, size: usize, seed: u64) -> Result<Vec<SyntheticSample>> {
    if size < 8 {
        return Err(Error::argument(format!("synthetic size {size} is too small")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|i| sample(&mut rng, size, format!("synth_{i:03}"))).collect())
}

/// Writes `RGB/*.ppm`, `depth/*.pgm` and `GT/*.pgm` under `root`.
pub fn write_dataset(root: &Path, samples: &[SyntheticSample]) -> Result<DatasetLayout> {
    let layout = DatasetLayout::new(root);
    for dir in [layout.rgb_dir(), layout.depth_dir(), layout.gt_dir()] {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for s in samples {
        crate::io::write_file(&layout.rgb_dir().join(format!("{}.ppm", s.stem)), &s.rgb.encode_pnm())?;
        crate::io::write_file(&layout.depth_dir().join(format!("{}.pgm", s.stem)), &s.depth.encode_pnm())?;
        crate::io::write_file(&layout.gt_dir().join(format!("{}.pgm", s.stem)), &s.gt.encode_pnm())?;
    }
    Ok(layout)
}
