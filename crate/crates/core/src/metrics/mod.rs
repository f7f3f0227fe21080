//! Saliency evaluation: MAE, precision-recall, F-measures, weighted F,
//! S-measure and E-measure, per image and aggregated over a dataset.

mod emeasure;
mod fmeasure;
mod smeasure;
mod weighted;

pub use emeasure::e_measure;
pub use fmeasure::{adaptive_threshold_index, f_measure, f_score, mae, pr_curve, PrCurve, F_BETA2, THRESHOLDS};
pub use smeasure::{s_measure, S_ALPHA};
pub use weighted::{distance_transform, weighted_f, WF_BETA2};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Single-channel map with values in [0, 1], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

/// A predicted map.
pub type SaliencyMap = GrayMap;

impl GrayMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::shape(format!("empty map {width}×{height}")));
        }
        if values.len() != width * height {
            return Err(Error::shape(format!(
                "{} values for a {width}×{height} map",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::argument(format!("map value {v} outside [0, 1]")));
        }
        Ok(Self { width, height, values })
    }

    pub fn constant(width: usize, height: usize, v: f64) -> Result<Self> {
        Self::new(width, height, vec![v; width * height])
    }

    /// Values `bytes[i] / 255`.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    /// Batch item `item` of an N×1×H×W tensor.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>, item: usize) -> Result<Self> {
        let [n, c, h, w] = t.dims4()?;
        if c != 1 || item >= n {
            return Err(Error::shape(format!(
                "cannot take item {item} of {:?} as a single-channel map",
                t.dims()
            )));
        }
        let plane = &t.data()[item * h * w..(item + 1) * h * w];
        Self::new(w, h, plane.iter().map(|v| v.to_f64().clamp(0.0, 1.0)).collect())
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new(
            &[1, 1, self.height, self.width],
            self.values.iter().map(|&v| T::from_f64(v)).collect(),
        )
        .expect("valid map dims")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Foreground mask at the ground-truth threshold (`v >= 0.5`).
    pub fn binarize(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v >= 0.5).collect()
    }

    /// 8-bit quantization `round(v * 255)`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.values.iter().map(|&v| (v * 255.0).round() as u8).collect()
    }

    pub(crate) fn check_same(&self, other: &GrayMap) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::shape(format!(
                "prediction {}×{} vs ground truth {}×{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// All metrics of one prediction against its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageMetrics {
    pub mae: f64,
    pub f_max: f64,
    pub f_avg: f64,
    pub f_weighted: f64,
    pub s_measure: f64,
    pub e_measure: f64,
    pub curve: PrCurve,
}

impl ImageMetrics {
    /// Scalar fields in report order.
    pub fn scalars(&self) -> [f64; 6] {
        [self.mae, self.f_max, self.f_avg, self.f_weighted, self.s_measure, self.e_measure]
    }
}

pub fn evaluate(p: &GrayMap, g: &GrayMap) -> Result<ImageMetrics> {
    let curve = pr_curve(p, g)?;
    let (f_max, f_avg) = f_measure(&curve, p, g)?;
    Ok(ImageMetrics {
        mae: mae(p, g)?,
        f_max,
        f_avg,
        f_weighted: weighted_f(p, g)?,
        s_measure: s_measure(p, g)?,
        e_measure: e_measure(p, g)?,
        curve,
    })
}

/// Dataset-level means and the pointwise-mean PR curve.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub mae: f64,
    pub f_max: f64,
    pub f_avg: f64,
    pub f_weighted: f64,
    pub s_measure: f64,
    pub e_measure: f64,
    pub curve: PrCurve,
    pub n_images: usize,
}

/// Means in the order given; callers fix that order for reproducible sums.
pub fn aggregate(images: &[ImageMetrics]) -> Result<MetricReport> {
    if images.is_empty() {
        return Err(Error::argument("cannot aggregate an empty set of images"));
    }
    let n = images.len() as f64;
    let mut sums = [0.0; 6];
    let mut precision = vec![0.0; THRESHOLDS];
    let mut recall = vec![0.0; THRESHOLDS];
    for m in images {
        for (s, v) in sums.iter_mut().zip(m.scalars()) {
            *s += v;
        }
        for k in 0..THRESHOLDS {
            precision[k] += m.curve.precision[k];
            recall[k] += m.curve.recall[k];
        }
    }
    let [mae, f_max, f_avg, f_weighted, s_measure, e_measure] = sums.map(|s| s / n);
    precision.iter_mut().chain(recall.iter_mut()).for_each(|v| *v /= n);
    Ok(MetricReport {
        mae,
        f_max,
        f_avg,
        f_weighted,
        s_measure,
        e_measure,
        curve: PrCurve { precision, recall },
        n_images: images.len(),
    })
}
