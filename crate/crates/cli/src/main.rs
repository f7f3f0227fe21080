use std::path::PathBuf;
use std::process::ExitCode;

use acfnet::gradcheck::CheckConfig;
use acfnet::runner::{self, NETWORK_STEP};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "acfnet", version, about = "RGB-D salient object detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score predicted saliency maps against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Report JSON path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// PR-curve CSV path.
        #[arg(long)]
        curves: Option<PathBuf>,
        /// Worker threads (capped by ACF_THREADS).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Predict the fused saliency map of one RGB-D pair.
    Forward {
        #[arg(long)]
        rgb: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Forced gates g1r,g2r,g3r,g1d,g2d,g3d.
        #[arg(long, value_parser = parse_gates)]
        gates: Option<[f64; 6]>,
    },
    /// Train the toy network from a seeded initialization.
    TrainToy {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the full network gradient.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Export the learned gate values of a dataset as CSV.
    InspectGates {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also export the attention-module gates.
        #[arg(long)]
        tam: bool,
    },
    /// Write a synthetic RGB-D dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn parse_gates(s: &str) -> Result<[f64; 6], String> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; 6] = vals
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 6 gate values, got {}", v.len()))?;
    if arr.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err("gate values must lie in [0, 1]".into());
    }
    Ok(arr)
}

fn run(cmd: Command) -> acfnet::Result<()> {
    match cmd {
        Command::Eval {
            pred,
            gt,
            out,
            curves,
            jobs,
        } => {
            let res = runner::run_eval(&pred, &gt, out.as_deref(), curves.as_deref(), jobs)?;
            if out.is_none() {
                print!("{}", res.to_json());
            }
        }
        Command::Forward {
            rgb,
            depth,
            weights,
            out,
            gates,
        } => {
            let rep = runner::run_forward(&rgb, &depth, &weights, &out, gates)?;
            let vals: Vec<String> = rep.gates.to_array().iter().map(|v| format!("{v:.6}")).collect();
            println!("G1r,G2r,G3r,G1d,G2d,G3d");
            println!("{}", vals.join(","));
        }
        Command::TrainToy {
            data,
            epochs,
            seed,
            out,
        } => {
            let rep = runner::run_train_toy(&data, epochs, seed, &out)?;
            let l = &rep.final_loss;
            println!(
                "steps {} total {:.6} bce_f {:.6} iou_f {:.6}",
                rep.steps, l.total, l.bce_f, l.iou_f
            );
        }
        Command::Gradcheck { seed, tol } => {
            let cfg = CheckConfig {
                h: NETWORK_STEP,
                tol,
                seed,
                ..CheckConfig::default()
            };
            let rep = runner::network_gradcheck(seed, &cfg)?;
            println!(
                "coords {} tensors {} pass_rate {:.4} max_rel {:.3e}",
                rep.coords.len(),
                rep.tensors_covered(),
                rep.pass_rate(),
                rep.max_rel_error()
            );
            for f in rep.failures() {
                println!(
                    "FAIL {}[{}] analytic {:.6e} numeric {:.6e} rel {:.3e}",
                    f.name, f.index, f.analytic, f.numeric, f.rel_error
                );
            }
            if !rep.all_passed() {
                return Err(acfnet::Error::Evaluation("gradient check failed".into()));
            }
        }
        Command::InspectGates {
            data,
            weights,
            out,
            tam,
        } => {
            let rows = runner::inspect_gates(&data, &weights, &out, tam)?;
            println!("{} images", rows.len());
        }
        Command::Synth {
            out,
            count,
            size,
            seed,
        } => {
            let samples = runner::generate(count, size, seed)?;
            runner::write_dataset(&out, &samples)?;
            println!("{} pairs written to {}", samples.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage_error() { 1 } else { 2 })
        }
    }
}
