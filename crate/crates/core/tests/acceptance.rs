//! End-to-end acceptance run: one PASS/FAIL line per criterion.

mod common;

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use acfnet::fusion::GateWeights;
use acfnet::gradcheck::CheckConfig;
use acfnet::io::weights_file::{decode, encode};
use acfnet::io::{load_gray, load_image, load_weights, save_pgm, DatasetLayout, Raster};
use acfnet::metrics::{self, e_measure, f_measure, mae, pr_curve, s_measure, weighted_f, GrayMap};
use acfnet::nn::{Graph, Registry};
use acfnet::ops::pool::PoolKind;
use acfnet::runner::{self, TrainConfig, TrainingSet, NETWORK_STEP};
use acfnet::supervision::{bce_loss, iou_loss};
use acfnet::tam::{Tam, TamGates, BRANCHES};
use acfnet::{AcfNet, ForwardOptions, Tensor};
use common::oracles::{self, Pair};
use common::{check_graph, random, random_f32, random_pair, rng};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed <= Duration::from_secs(limit_s), || {
        format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn gradient_integrity() -> Outcome {
    let t = Instant::now();
    let mut r = rng(1);
    let elementwise: Vec<(&str, acfnet::gradcheck::CheckReport)> = vec![
        ("relu", check_graph(&[("x", random(&mut r, &[2, 3, 4, 4], 0.05, 1.0))], 1e-5, 96, |t, v| {
            let n = t.scale(v[0], -1.0);
            let a = t.relu(v[0]);
            let b = t.relu(n);
            t.add(a, b)
        })),
        ("sigmoid", check_graph(&[("x", random(&mut r, &[2, 3, 4, 4], -3.0, 3.0))], 1e-5, 96, |t, v| Ok(t.sigmoid(v[0])))),
        ("mul+add", check_graph(&[("a", random(&mut r, &[2, 2, 3, 3], -1.0, 1.0)), ("b", random(&mut r, &[2, 2, 3, 3], -1.0, 1.0))], 1e-5, 72, |t, v| {
            let m = t.mul(v[0], v[1])?;
            t.add(m, v[0])
        })),
        ("gates", check_graph(&[("x", random(&mut r, &[2, 3, 3, 3], -1.0, 1.0)), ("s", random(&mut r, &[2, 1, 1, 1], 0.1, 0.9)), ("m", random(&mut r, &[2, 1, 3, 3], 0.1, 0.9))], 1e-5, 74, |t, v| {
            let y = t.scale_batch(v[0], v[1])?;
            t.mul_planes(y, v[2])
        })),
        ("pool+resize", check_graph(&[("x", random(&mut r, &[2, 3, 3, 4], -1.0, 1.0))], 1e-5, 72, |t, v| {
            let avg = t.pool(v[0], PoolKind::GapChannel)?;
            let up = t.upsample_bilinear(avg, 2)?;
            let c = t.concat_channels(&[up, up])?;
            t.slice_channels(c, 1, 2)
        })),
    ];
    for (name, rep) in &elementwise {
        ensure(rep.all_passed(), || format!("elementwise {name} max rel {:.2e}", rep.max_rel_error()))?;
    }
    let cfg = CheckConfig {
        h: NETWORK_STEP,
        tol: 1e-3,
        samples: 200,
        seed: 7,
        ..CheckConfig::default()
    };
    let rep = runner::network_gradcheck(7, &cfg).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let failed = rep.coords.iter().filter(|c| !c.passed).count();
    ensure(rep.coords.len() >= 200, || format!("only {} coordinates", rep.coords.len()))?;
    ensure(rep.all_passed(), || {
        format!("{failed}/{} network coordinates above 1e-3, max rel {:.2e}", rep.coords.len(), rep.max_rel_error())
    })?;
    within(elapsed, 120)?;
    Ok(format!(
        "{} coordinates over {} tensors, max rel {:.2e}; elementwise at 1e-5; {:.1}s",
        rep.coords.len(),
        rep.tensors_covered(),
        rep.max_rel_error(),
        elapsed.as_secs_f64()
    ))
}

fn fusion_extremes() -> Outcome {
    let t = Instant::now();
    let net = AcfNet::toy();
    let w = net.init(3);
    let mut r = rng(3);
    let rgb = random_f32(&mut r, &[2, 3, 64, 64], 0.0, 1.0);
    let depth = random_f32(&mut r, &[2, 1, 64, 64], 0.0, 1.0);
    let run = |opts: ForwardOptions| {
        let mut g = Graph::inference(&w);
        let out = net.forward(&mut g, &rgb, &depth, &opts).map_err(|e| e.to_string())?;
        let f = out.features;
        Ok::<_, String>(
            [out.sal_r, out.sal_d, out.sal_f, f.i1, f.i2, f.i3, f.f5]
                .map(|v| g.value(v).clone()),
        )
    };
    let forced = run(ForwardOptions::forced(GateWeights::uniform(0.0)))?;
    let zeroed = run(ForwardOptions {
        zero_guidance: true,
        ..ForwardOptions::default()
    })?;
    for (k, (a, b)) in forced.iter().zip(&zeroed).enumerate() {
        ensure(a.bit_eq(b), || format!("output {k} differs between zero gates and zeroed guidance"))?;
    }
    let first = run(ForwardOptions::forced(GateWeights::from_array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])))?;
    let width = net.config.width;
    for (name, t) in [("I2", &first[4]), ("I3", &first[5])] {
        let c = t.dims()[1];
        let guidance = t.slice_channels(c - 2 * width, c).map_err(|e| e.to_string())?;
        ensure(guidance.data().iter().all(|&v| v == 0.0), || format!("{name} guidance slice is not zero"))?;
    }
    let i1 = &first[3];
    let c = i1.dims()[1];
    let g1 = i1.slice_channels(c - 2 * width, c).map_err(|e| e.to_string())?;
    ensure(g1.data().iter().any(|&v| v != 0.0), || "I1 guidance vanished under unit gates".into())?;
    within(t.elapsed(), 10)?;
    Ok(format!("bit-identical outputs, I2/I3 guidance exactly zero; {:.2}s", t.elapsed().as_secs_f64()))
}

fn tam_algebra() -> Outcome {
    let t = Instant::now();
    let tam = Tam::new("tam", 64).map_err(|e| e.to_string())?;
    let mut reg = Registry::new();
    tam.declare(&mut reg);
    let w = reg.initialize(4);
    let mut r = rng(4);
    let x = random_f32(&mut r, &[2, 64, 16, 16], -1.0, 1.0);
    let mut g = Graph::inference(&w);
    let xv = g.input(x);
    let gated = tam.forward(&mut g, xv, TamGates::Forced([1.0; BRANCHES])).map_err(|e| e.to_string())?;
    let plain = (|| -> acfnet::Result<_> {
        let branches = tam.branches(&mut g, xv)?;
        let cat = g.tape.concat_channels(&branches)?;
        let f_ta = tam.fuse.forward(&mut g, cat)?;
        let avg = g.tape.pool(f_ta, PoolKind::GapChannel)?;
        let max = g.tape.pool(f_ta, PoolKind::GmpChannel)?;
        let pooled = g.tape.concat_channels(&[avg, max])?;
        let logits = tam.spatial.forward(&mut g, pooled)?;
        let att = g.tape.sigmoid(logits);
        let f_sa = g.tape.mul_planes(f_ta, att)?;
        let res = g.tape.add(xv, f_sa)?;
        let pre = tam.out.forward(&mut g, res)?;
        Ok(g.tape.relu(pre))
    })()
    .map_err(|e| e.to_string())?;
    ensure(g.value(plain).bit_eq(g.value(gated.output)), || "unit gates differ from plain concatenation".into())?;

    for i in 0..BRANCHES {
        let mut gates = [0.6; BRANCHES];
        gates[i] = 0.0;
        let branches = tam.branches(&mut g, xv).map_err(|e| e.to_string())?;
        let gv = tam.forced_gates(&mut g, 2, gates).map_err(|e| e.to_string())?;
        let base = tam.combine(&mut g, xv, branches, gv).map_err(|e| e.to_string())?;
        let mut perturbed = branches;
        perturbed[i] = g.input(random_f32(&mut r, &[2, 64, 16, 16], -3.0, 3.0));
        let other = tam.combine(&mut g, xv, perturbed, gv).map_err(|e| e.to_string())?;
        ensure(g.value(base.output).bit_eq(g.value(other.output)), || format!("closed gate {i} leaks"))?;
    }
    within(t.elapsed(), 10)?;
    Ok(format!("plain-concat identity and {BRANCHES} closed-gate invariances; {:.2}s", t.elapsed().as_secs_f64()))
}

fn loss_analytics() -> Outcome {
    let t = Instant::now();
    let mut r = rng(5);
    let half = Tensor::full(&[2, 1, 8, 8], 0.5f64).unwrap();
    let mut worst_bce: f64 = 0.0;
    for _ in 0..50 {
        let g = random(&mut r, &[2, 1, 8, 8], 0.0, 1.0).map(|v| v.round());
        let l = bce_loss(&half, &g).map_err(|e| e.to_string())?;
        worst_bce = worst_bce.max((l - std::f64::consts::LN_2).abs());
    }
    ensure(worst_bce <= 1e-6, || format!("bce(0.5) off ln 2 by {worst_bce:e}"))?;
    let ones = Tensor::full(&[2, 1, 8, 8], 1.0f64).unwrap();
    let iou_half = iou_loss(&half, &ones).map_err(|e| e.to_string())?;
    ensure((iou_half - 0.5).abs() <= 1e-6, || format!("iou(0.5, 1) = {iou_half}"))?;
    for k in 0..1000 {
        let n = r.random_range(1..4);
        let side = r.random_range(1..9);
        let p = random(&mut r, &[n, 1, side, side], 0.0, 1.0);
        let g = if k % 2 == 0 {
            random(&mut r, &[n, 1, side, side], 0.0, 1.0).map(|v| v.round())
        } else {
            random(&mut r, &[n, 1, side, side], 0.0, 1.0)
        };
        let l = iou_loss(&p, &g).map_err(|e| e.to_string())?;
        ensure((0.0..=1.0).contains(&l), || format!("iou {l} outside [0, 1]"))?;
    }
    within(t.elapsed(), 5)?;
    Ok(format!("|bce - ln2| <= {worst_bce:.1e}, iou = {iou_half}, 1000 fuzzed pairs in range"))
}

fn metric_oracles() -> Outcome {
    let t = Instant::now();
    let mut r = rng(6);
    let (mut exact, mut stepwise) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let (p, g) = random_pair(&mut r, 8, 8, i % 2 == 0);
        let pm = GrayMap::new(8, 8, p.clone()).unwrap();
        let gm = GrayMap::new(8, 8, g.clone()).unwrap();
        let x = Pair::new(8, 8, &p, &g);
        let curve = pr_curve(&pm, &gm).map_err(|e| e.to_string())?;
        let (fmax, favg) = f_measure(&curve, &pm, &gm).map_err(|e| e.to_string())?;
        let (ofmax, ofavg) = oracles::f_max_avg(&x);
        exact = exact.max((mae(&pm, &gm).unwrap() - oracles::mae(&x)).abs());
        for (k, (op, or)) in oracles::curve(&x).into_iter().enumerate() {
            exact = exact.max((curve.precision[k] - op).abs()).max((curve.recall[k] - or).abs());
        }
        exact = exact.max((fmax - ofmax).abs()).max((favg - ofavg).abs());
        stepwise = stepwise
            .max((s_measure(&pm, &gm).unwrap() - oracles::s_measure(&x)).abs())
            .max((e_measure(&pm, &gm).unwrap() - oracles::e_measure(&x)).abs())
            .max((weighted_f(&pm, &gm).unwrap() - oracles::weighted_f(&x)).abs());
    }
    ensure(exact <= 1e-9, || format!("counting metrics off by {exact:e}"))?;
    ensure(stepwise <= 1e-6, || format!("structural metrics off by {stepwise:e}"))?;
    for i in 0..10 {
        let (_, g) = random_pair(&mut r, 8, 8, false);
        let mut g = g;
        g[i] = 1.0;
        let gm = GrayMap::new(8, 8, g).unwrap();
        let m = metrics::evaluate(&gm, &gm).map_err(|e| e.to_string())?;
        ensure(m.mae.abs() <= 1e-6, || format!("perfect mae {}", m.mae))?;
        for v in [m.f_max, m.f_avg, m.f_weighted, m.s_measure, m.e_measure] {
            ensure((v - 1.0).abs() <= 1e-6, || format!("perfect prediction scored {m:?}"))?;
        }
    }
    within(t.elapsed(), 30)?;
    Ok(format!("max deviation {exact:.1e} (counting), {stepwise:.1e} (structural); fixed points hold"))
}

fn toy_learnability(dir: &Path) -> Outcome {
    let t = Instant::now();
    let samples = runner::generate(4, 64, 7).map_err(|e| e.to_string())?;
    let layout = runner::write_dataset(&dir.join("toy"), &samples).map_err(|e| e.to_string())?;
    let cfg = TrainConfig::toy(1, 7);
    let epochs = 500 / cfg.steps_per_epoch(samples.len());
    let out = dir.join("toy.acfw");
    let rep = runner::run_train_toy(&layout.root, epochs, 7, &out).map_err(|e| e.to_string())?;
    let data = TrainingSet::load(&layout).map_err(|e| e.to_string())?;
    let net = AcfNet::toy();
    let w = load_weights(&out).map_err(|e| e.to_string())?;
    let f_max = data
        .evaluate(&net, &w)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|m| m.f_max)
        .fold(f64::INFINITY, f64::min);
    let total = rep.final_loss.total;
    let summary = format!(
        "{} steps, final total loss {total:.4}, min training f_max {f_max:.4}, {:.0}s",
        rep.steps,
        t.elapsed().as_secs_f64()
    );
    ensure(rep.steps <= 500, || format!("{} steps", rep.steps))?;
    ensure(total < 0.1 && f_max >= 0.95, || summary.clone())?;
    within(t.elapsed(), 300)?;
    Ok(summary)
}

fn expected_json(stems: &[String], pairs: &[Pair]) -> String {
    let rows: Vec<[f64; 6]> = pairs
        .iter()
        .map(|x| {
            let (fmax, favg) = oracles::f_max_avg(x);
            [oracles::mae(x), fmax, favg, oracles::weighted_f(x), oracles::s_measure(x), oracles::e_measure(x)]
        })
        .collect();
    let keys = ["mae", "f_max", "f_avg", "f_weighted", "s_measure", "e_measure"];
    let mut s = String::from("{\n");
    for (k, key) in keys.iter().enumerate() {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64;
        let _ = writeln!(s, "  \"{key}\": {mean:.6},");
    }
    let _ = writeln!(s, "  \"n_images\": {},", rows.len());
    s.push_str("  \"images\": [\n");
    for (i, (stem, row)) in stems.iter().zip(&rows).enumerate() {
        let fields: Vec<String> = keys.iter().zip(row).map(|(k, v)| format!("\"{k}\": {v:.6}")).collect();
        let sep = if i + 1 == rows.len() { "" } else { "," };
        let _ = writeln!(s, "    {{\"stem\": \"{stem}\", {}}}{sep}", fields.join(", "));
    }
    s.push_str("  ]\n}\n");
    s
}

fn determinism_and_formats(dir: &Path) -> Outcome {
    // Seeded training writes identical bytes.
    let samples = runner::generate(2, 32, 11).map_err(|e| e.to_string())?;
    let layout = runner::write_dataset(&dir.join("det"), &samples).map_err(|e| e.to_string())?;
    let (a, b) = (dir.join("a.acfw"), dir.join("b.acfw"));
    runner::run_train_toy(&layout.root, 2, 5, &a).map_err(|e| e.to_string())?;
    runner::run_train_toy(&layout.root, 2, 5, &b).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&a).map_err(|e| e.to_string())?;
    ensure(bytes == std::fs::read(&b).map_err(|e| e.to_string())?, || "same seed gave different weights".into())?;
    let zero = dir.join("zero.acfw");
    runner::run_train_toy(&layout.root, 0, 5, &zero).map_err(|e| e.to_string())?;
    ensure(
        std::fs::read(&zero).map_err(|e| e.to_string())? == encode(&AcfNet::toy().init(5)),
        || "zero epochs differ from the seeded initialization".into(),
    )?;

    // Weights container round-trips bit for bit.
    let w = decode(&bytes, &a).map_err(|e| e.to_string())?;
    ensure(encode(&w) == bytes, || "weights re-encode differently".into())?;

    // P5/P6 round trips: exact on bytes, within half a grey level on maps.
    let mut r = rng(8);
    for channels in [1, 3] {
        let raw: Vec<u8> = (0..13 * 7 * channels).map(|_| r.random()).collect();
        let raster = Raster::new(13, 7, channels, raw).unwrap();
        let path = dir.join(format!("img{channels}.pnm"));
        std::fs::write(&path, raster.encode_pnm()).map_err(|e| e.to_string())?;
        ensure(load_image(&path).map_err(|e| e.to_string())? == raster, || format!("P{} round trip", if channels == 1 { 5 } else { 6 }))?;
    }
    let vals: Vec<f64> = (0..64).map(|_| r.random_range(0.0..=1.0)).collect();
    let map = GrayMap::new(8, 8, vals).unwrap();
    let path = dir.join("map.pgm");
    save_pgm(&path, &map).map_err(|e| e.to_string())?;
    let back = load_gray(&path).map_err(|e| e.to_string())?;
    let q = map.values().iter().zip(back.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    ensure(q <= 0.5 / 255.0 + 1e-12, || format!("quantization error {q}"))?;

    // Evaluation JSON equals an oracle rendering, byte for byte, for any worker count.
    let fixture = runner::generate(5, 32, 13).map_err(|e| e.to_string())?;
    let froot = runner::write_dataset(&dir.join("fixture"), &fixture).map_err(|e| e.to_string())?;
    let pred_dir = dir.join("fixture_pred");
    std::fs::create_dir_all(&pred_dir).map_err(|e| e.to_string())?;
    let mut stems = Vec::new();
    let mut pairs = Vec::new();
    for s in &fixture {
        let g = s.gt.to_gray().unwrap();
        let noisy: Vec<f64> = g
            .values()
            .iter()
            .map(|&v| ((0.8 * v + 0.1 + r.random_range(-0.1..0.1)) * 255.0).round() / 255.0)
            .collect();
        let p = GrayMap::new(g.width(), g.height(), noisy).unwrap();
        save_pgm(&pred_dir.join(format!("{}.pgm", s.stem)), &p).map_err(|e| e.to_string())?;
        let stored = load_gray(&pred_dir.join(format!("{}.pgm", s.stem))).map_err(|e| e.to_string())?;
        pairs.push(Pair::new(g.width(), g.height(), stored.values(), g.values()));
        stems.push(s.stem.clone());
    }
    let expected = expected_json(&stems, &pairs);
    for jobs in [1, 3] {
        let json = dir.join(format!("report{jobs}.json"));
        runner::run_eval(&pred_dir, &DatasetLayout::new(&froot.root).gt_dir(), Some(&json), None, Some(jobs))
            .map_err(|e| e.to_string())?;
        let got = std::fs::read_to_string(&json).map_err(|e| e.to_string())?;
        ensure(got == expected, || format!("JSON with {jobs} workers differs from oracle:\n{got}\nvs\n{expected}"))?;
    }
    Ok("seeded weights identical, containers and P5/P6 lossless, eval JSON matches oracle bytes".into())
}

fn pr_sanity() -> Outcome {
    let mut r = rng(9);
    for i in 0..500 {
        let w = r.random_range(1..20);
        let h = r.random_range(1..20);
        let (p, g) = random_pair(&mut r, w, h, i % 3 == 0);
        let pm = GrayMap::new(w, h, p).unwrap();
        let gm = GrayMap::new(w, h, g).unwrap();
        let m = metrics::evaluate(&pm, &gm).map_err(|e| e.to_string())?;
        ensure(m.curve.recall.windows(2).all(|x| x[1] <= x[0]), || format!("recall increases on instance {i}"))?;
        ensure(m.f_max >= m.f_avg, || format!("f_max {} < f_avg {} on instance {i}", m.f_max, m.f_avg))?;
    }
    Ok("500 fuzzed instances".into())
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("gradient integrity", Box::new(gradient_integrity)),
        ("fusion extremes", Box::new(fusion_extremes)),
        ("attention algebra", Box::new(tam_algebra)),
        ("loss analytics", Box::new(loss_analytics)),
        ("metric oracles", Box::new(metric_oracles)),
        ("toy learnability", Box::new(|| toy_learnability(dir.path()))),
        ("determinism and formats", Box::new(|| determinism_and_formats(dir.path()))),
        ("pr-curve sanity", Box::new(pr_sanity)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
