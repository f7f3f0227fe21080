//! Pairing of files by stem across dataset directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Extensions accepted as images.
pub fn image_extensions() -> &'static [&'static str] {
    if cfg!(feature = "png") {
        &["pgm", "ppm", "png"]
    } else {
        &["pgm", "ppm"]
    }
}

/// Image files of `dir` keyed by stem. Two images sharing a stem is an error.
pub fn list_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(ext) = path.extension().and_then(|e| e.to_str()) else {
            continue;
        };
        if !path.is_file() || !image_extensions().iter().any(|x| x.eq_ignore_ascii_case(ext)) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if let Some(prev) = out.insert(stem.to_string(), path.clone()) {
            return Err(Error::dataset(format!(
                "stem '{stem}' is ambiguous: {} and {}",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

fn unmatched_message(dirs: &[&BTreeMap<String, PathBuf>], matched: usize) -> String {
    let mut stray: Vec<String> = dirs
        .iter()
        .flat_map(|m| m.iter())
        .filter(|(s, _)| !dirs.iter().all(|m| m.contains_key(*s)))
        .map(|(_, p)| p.display().to_string())
        .collect();
    stray.sort();
    if stray.is_empty() {
        format!("{matched} matched stems, no images found")
    } else {
        format!("{matched} matched stems; unmatched files: {}", stray.join(", "))
    }
}

/// One prediction/ground-truth pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StemPair {
    pub stem: String,
    pub a: PathBuf,
    pub b: PathBuf,
}

/// Stems present in both directories, sorted. Fails when none match.
pub fn match_stems(dir_a: &Path, dir_b: &Path) -> Result<Vec<StemPair>> {
    let a = list_images(dir_a)?;
    let b = list_images(dir_b)?;
    let pairs: Vec<StemPair> = a
        .iter()
        .filter_map(|(stem, pa)| {
            b.get(stem).map(|pb| StemPair {
                stem: stem.clone(),
                a: pa.clone(),
                b: pb.clone(),
            })
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::dataset(unmatched_message(&[&a, &b], 0)));
    }
    Ok(pairs)
}

/// `root/RGB`, `root/depth`, `root/GT`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub stem: String,
    pub rgb: PathBuf,
    pub depth: PathBuf,
    pub gt: PathBuf,
}

impl DatasetLayout {
    pub const RGB: &'static str = "RGB";
    pub const DEPTH: &'static str = "depth";
    pub const GT: &'static str = "GT";

    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn rgb_dir(&self) -> PathBuf {
        self.root.join(Self::RGB)
    }

    pub fn depth_dir(&self) -> PathBuf {
        self.root.join(Self::DEPTH)
    }

    pub fn gt_dir(&self) -> PathBuf {
        self.root.join(Self::GT)
    }

    /// Every stem must appear in all three directories.
    pub fn samples(&self) -> Result<Vec<Sample>> {
        let rgb = list_images(&self.rgb_dir())?;
        let depth = list_images(&self.depth_dir())?;
        let gt = list_images(&self.gt_dir())?;
        let dirs = [&rgb, &depth, &gt];
        let complete = rgb.keys().filter(|s| depth.contains_key(*s) && gt.contains_key(*s)).count();
        let total = rgb.len().max(depth.len()).max(gt.len());
        if complete == 0 || complete != rgb.len() || complete != depth.len() || complete != gt.len() || total == 0 {
            return Err(Error::dataset(format!(
                "{}: {}",
                self.root.display(),
                unmatched_message(&dirs, complete)
            )));
        }
        Ok(rgb
            .iter()
            .map(|(stem, p)| Sample {
                stem: stem.clone(),
                rgb: p.clone(),
                depth: depth[stem].clone(),
                gt: gt[stem].clone(),
            })
            .collect())
    }
}
