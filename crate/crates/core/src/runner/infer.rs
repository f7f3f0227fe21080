//! Single-image inference and gate export.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::fusion::{GateMode, GateWeights};
use crate::io::{save_pgm, DatasetLayout};
use crate::metrics::GrayMap;
use crate::model::{AcfNet, ForwardOptions};
use crate::tam::BRANCHES;

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardReport {
    pub gates: GateWeights,
    pub map: GrayMap,
}

/// Writes the fused saliency map of one RGB-D pair as P5.
pub fn run_forward(
    rgb: &Path,
    depth: &Path,
    weights: &Path,
    out: &Path,
    gates: Option<[f64; 6]>,
) -> Result<ForwardReport> {
    let net = AcfNet::toy();
    let opts = match gates {
        Some(g) => ForwardOptions::forced(GateWeights::from_array(g)),
        None => ForwardOptions::default(),
    };
    opts.gates.validate()?;
    let w = super::load_model_weights(&net, weights)?;
    let (x_r, x_d) = super::load_pair(rgb, depth)?;
    let pred = net.predict(&w, &x_r, &x_d, &opts)?;
    let map = GrayMap::from_tensor(&pred.sal_f, 0)?;
    save_pgm(out, &map)?;
    Ok(ForwardReport {
        gates: pred.gates[0],
        map,
    })
}

/// Per-image gate values.
#[derive(Clone, Debug, PartialEq)]
pub struct GateRow {
    pub filename: String,
    pub gates: GateWeights,
    /// Attention gates of the RGB, depth and fusion modules.
    pub tam: [[f64; BRANCHES]; 3],
}

const TAM_NAMES: [&str; 3] = ["r", "d", "f"];

pub fn gates_csv_header(with_tam: bool) -> String {
    let mut s = String::from("filename,G1r,G2r,G3r,G1d,G2d,G3d");
    if with_tam {
        for m in TAM_NAMES {
            for i in 1..=BRANCHES {
                let _ = write!(s, ",tam_{m}_g{i}");
            }
        }
    }
    s
}

impl GateRow {
    pub fn to_csv(&self, with_tam: bool) -> String {
        let mut s = self.filename.clone();
        for v in self.gates.to_array() {
            let _ = write!(s, ",{v:.6}");
        }
        if with_tam {
            for v in self.tam.iter().flatten() {
                let _ = write!(s, ",{v:.6}");
            }
        }
        s
    }
}

/// Learned gates of every image in a dataset, written as CSV.
pub fn inspect_gates(data_dir: &Path, weights: &Path, out: &Path, with_tam: bool) -> Result<Vec<GateRow>> {
    let net = AcfNet::toy();
    let w = super::load_model_weights(&net, weights)?;
    let opts = ForwardOptions {
        gates: GateMode::Learned,
        ..ForwardOptions::default()
    };
    let mut rows = Vec::new();
    for s in DatasetLayout::new(data_dir).samples()? {
        let (x_r, x_d) = super::load_pair(&s.rgb, &s.depth)?;
        let pred = net.predict(&w, &x_r, &x_d, &opts)?;
        let filename = s
            .rgb
            .file_name()
            .map_or_else(|| s.stem.clone(), |f| f.to_string_lossy().into_owned());
        rows.push(GateRow {
            filename,
            gates: pred.gates[0],
            tam: pred.tam_gates[0],
        });
    }
    let mut csv = gates_csv_header(with_tam);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.to_csv(with_tam));
        csv.push('\n');
    }
    crate::io::write_file(out, csv.as_bytes())?;
    Ok(rows)
}
