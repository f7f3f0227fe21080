//! Dataset evaluation of predicted maps against ground truth.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{load_gray, match_stems, resample_to};
use crate::metrics::{aggregate, evaluate, ImageMetrics, MetricReport, PrCurve, THRESHOLDS};

/// Environment variable capping the evaluation worker count.
pub const THREADS_ENV: &str = "ACF_THREADS";

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutput {
    pub report: MetricReport,
    /// Per-image results in sorted-stem order.
    pub images: Vec<(String, ImageMetrics)>,
}

/// Workers for `jobs` (default: available cores), capped by `ACF_THREADS`.
pub fn worker_count(jobs: Option<usize>) -> usize {
    let default = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let n = jobs.unwrap_or(default).max(1);
    cap.map_or(n, |c| n.min(c))
}

fn evaluate_pair(pred: &Path, gt: &Path) -> Result<ImageMetrics> {
    let g = load_gray(gt)?;
    let p = resample_to(&load_gray(pred)?, g.width(), g.height())?;
    evaluate(&p, &g)
}

/// Evaluates every stem present in both directories.
pub fn run_eval(
    pred_dir: &Path,
    gt_dir: &Path,
    out_json: Option<&Path>,
    curves_csv: Option<&Path>,
    jobs: Option<usize>,
) -> Result<EvalOutput> {
    let pairs = match_stems(pred_dir, gt_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(jobs))
        .build()
        .map_err(|e| Error::argument(format!("worker pool: {e}")))?;
    let metrics: Vec<ImageMetrics> = pool.install(|| {
        pairs
            .par_iter()
            .map(|p| evaluate_pair(&p.a, &p.b))
            .collect::<Result<_>>()
    })?;
    let report = aggregate(&metrics)?;
    let images = pairs.into_iter().map(|p| p.stem).zip(metrics).collect();
    let out = EvalOutput { report, images };
    if let Some(path) = out_json {
        crate::io::write_file(path, out.to_json().as_bytes())?;
    }
    if let Some(path) = curves_csv {
        crate::io::write_file(path, pr_csv(&out.report.curve).as_bytes())?;
    }
    Ok(out)
}

fn scalar_fields(m: [f64; 6]) -> String {
    let keys = ["mae", "f_max", "f_avg", "f_weighted", "s_measure", "e_measure"];
    keys.iter()
        .zip(m)
        .map(|(k, v)| format!("\"{k}\": {v:.6}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl EvalOutput {
    /// Report JSON with every number printed to six decimals.
    pub fn to_json(&self) -> String {
        let r = &self.report;
        let mut s = String::from("{\n");
        for (k, v) in [
            ("mae", r.mae),
            ("f_max", r.f_max),
            ("f_avg", r.f_avg),
            ("f_weighted", r.f_weighted),
            ("s_measure", r.s_measure),
            ("e_measure", r.e_measure),
        ] {
            let _ = writeln!(s, "  \"{k}\": {v:.6},");
        }
        let _ = writeln!(s, "  \"n_images\": {},", r.n_images);
        s.push_str("  \"images\": [\n");
        for (i, (stem, m)) in self.images.iter().enumerate() {
            let sep = if i + 1 == self.images.len() { "" } else { "," };
            let name = serde_json::to_string(stem).expect("strings serialize");
            let _ = writeln!(s, "    {{\"stem\": {name}, {}}}{sep}", scalar_fields(m.scalars()));
        }
        s.push_str("  ]\n}\n");
        s
    }
}

/// `threshold,precision,recall`, one row per threshold.
pub fn pr_csv(curve: &PrCurve) -> String {
    let mut s = String::from("threshold,precision,recall\n");
    for k in 0..THRESHOLDS {
        let _ = writeln!(
            s,
            "{:.6},{:.6},{:.6}",
            PrCurve::threshold(k),
            curve.precision[k],
            curve.recall[k]
        );
    }
    s
}
