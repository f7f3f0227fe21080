//! Image, weights and dataset I/O.

pub mod dataset;
pub mod image;
pub mod weights_file;

pub use dataset::{match_stems, DatasetLayout, Sample, StemPair};
pub use image::{load_gray, load_image, resample_to, save_pgm, Raster};
pub use weights_file::{load_weights, save_weights};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
