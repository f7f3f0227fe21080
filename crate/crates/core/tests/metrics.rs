mod common;

use acfnet::metrics::{
    self, aggregate, distance_transform, e_measure, f_measure, mae, pr_curve, s_measure, weighted_f, GrayMap,
};
use common::oracles::{self, Pair};
use common::{random_pair, rng};
use proptest::prelude::*;

fn maps(w: usize, h: usize, p: &[f64], g: &[f64]) -> (GrayMap, GrayMap) {
    (GrayMap::new(w, h, p.to_vec()).unwrap(), GrayMap::new(w, h, g.to_vec()).unwrap())
}

fn assert_close(what: &str, a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs oracle {b}");
}

fn check_against_oracles(w: usize, h: usize, p: &[f64], g: &[f64]) {
    let (pm, gm) = maps(w, h, p, g);
    let x = Pair::new(w, h, p, g);
    assert_close("mae", mae(&pm, &gm).unwrap(), oracles::mae(&x), 1e-9);
    let curve = pr_curve(&pm, &gm).unwrap();
    for (k, (op, or)) in oracles::curve(&x).into_iter().enumerate() {
        assert_close("precision", curve.precision[k], op, 1e-9);
        assert_close("recall", curve.recall[k], or, 1e-9);
    }
    let (fmax, favg) = f_measure(&curve, &pm, &gm).unwrap();
    let (ofmax, ofavg) = oracles::f_max_avg(&x);
    assert_close("f_max", fmax, ofmax, 1e-9);
    assert_close("f_avg", favg, ofavg, 1e-9);
    assert_close("s_measure", s_measure(&pm, &gm).unwrap(), oracles::s_measure(&x), 1e-6);
    assert_close("e_measure", e_measure(&pm, &gm).unwrap(), oracles::e_measure(&x), 1e-6);
    assert_close("weighted_f", weighted_f(&pm, &gm).unwrap(), oracles::weighted_f(&x), 1e-6);
}

#[test]
fn seeded_8x8_pairs_match_oracles() {
    let mut r = rng(2024);
    for i in 0..100 {
        let (p, g) = random_pair(&mut r, 8, 8, i % 2 == 0);
        check_against_oracles(8, 8, &p, &g);
    }
}

#[test]
fn degenerate_masks_match_oracles() {
    let mut r = rng(5);
    for fill in [0.0, 1.0] {
        let (p, _) = random_pair(&mut r, 6, 5, false);
        check_against_oracles(6, 5, &p, &vec![fill; 30]);
    }
    check_against_oracles(4, 4, &[0.0; 16], &[0.0; 16]);
    check_against_oracles(4, 4, &[1.0; 16], &[1.0; 16]);
    let mut g = vec![0.0; 16];
    g[5] = 1.0;
    check_against_oracles(4, 4, &[0.5; 16], &g);
}

#[test]
fn perfect_prediction_fixed_points() {
    let mut r = rng(9);
    for _ in 0..20 {
        let (_, g) = random_pair(&mut r, 9, 7, false);
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        let (pm, gm) = maps(9, 7, &g, &g);
        let m = metrics::evaluate(&pm, &gm).unwrap();
        assert!(m.mae.abs() < 1e-6);
        for v in [m.f_max, m.f_avg, m.f_weighted, m.s_measure, m.e_measure] {
            assert!((v - 1.0).abs() < 1e-6, "{m:?}");
        }
    }
}

#[test]
fn worst_prediction_scores_low() {
    // Foreground stays 3 px from the border so the 7x7 smoothing window never sees padding.
    let inner = |i: usize| (3..17).contains(&(i / 20)) && (3..17).contains(&(i % 20));
    let g: Vec<f64> = (0..400).map(|i| if inner(i) && (i / 20 + i % 20) % 3 == 0 { 1.0 } else { 0.0 }).collect();
    let p: Vec<f64> = g.iter().map(|v| 1.0 - v).collect();
    let (pm, gm) = maps(20, 20, &p, &g);
    let m = metrics::evaluate(&pm, &gm).unwrap();
    assert_eq!(m.mae, 1.0);
    assert!(m.f_weighted < 1e-6, "{}", m.f_weighted);
    assert!(m.e_measure < 1e-6);
}

#[test]
fn weighted_f_of_empty_ground_truth_is_zero() {
    let (pm, gm) = maps(3, 3, &[0.2; 9], &[0.0; 9]);
    assert_eq!(weighted_f(&pm, &gm).unwrap(), 0.0);
}

#[test]
fn size_mismatch_is_a_shape_error() {
    let a = GrayMap::constant(4, 4, 0.0).unwrap();
    let b = GrayMap::constant(4, 5, 0.0).unwrap();
    assert!(matches!(metrics::evaluate(&a, &b), Err(acfnet::Error::Shape(_))));
}

#[test]
fn aggregate_of_one_image_is_that_image() {
    let mut r = rng(4);
    let (p, g) = random_pair(&mut r, 8, 8, true);
    let (pm, gm) = maps(8, 8, &p, &g);
    let m = metrics::evaluate(&pm, &gm).unwrap();
    let rep = aggregate(std::slice::from_ref(&m)).unwrap();
    assert_eq!(rep.n_images, 1);
    assert_eq!(rep.curve, m.curve);
    assert_eq!([rep.mae, rep.f_max, rep.f_avg, rep.f_weighted, rep.s_measure, rep.e_measure], m.scalars());
    assert!(aggregate(&[]).is_err());
}

fn pair_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
    (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
        (
            Just(w),
            Just(h),
            prop::collection::vec(0.0f64..=1.0, w * h),
            prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1.0 } else { 0.0 }), w * h),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn any_pair_matches_oracles((w, h, p, g) in pair_strategy()) {
        check_against_oracles(w, h, &p, &g);
    }

    #[test]
    fn scores_stay_in_unit_interval((w, h, p, g) in pair_strategy()) {
        let (pm, gm) = maps(w, h, &p, &g);
        let m = metrics::evaluate(&pm, &gm).unwrap();
        for v in m.scalars() {
            prop_assert!((0.0..=1.0).contains(&v), "{m:?}");
        }
    }

    #[test]
    fn recall_never_increases_with_threshold((w, h, p, g) in pair_strategy()) {
        let (pm, gm) = maps(w, h, &p, &g);
        let c = pr_curve(&pm, &gm).unwrap();
        prop_assert!(c.recall.windows(2).all(|x| x[1] <= x[0]));
    }

    #[test]
    fn f_max_dominates_f_avg((w, h, p, g) in pair_strategy()) {
        let (pm, gm) = maps(w, h, &p, &g);
        let m = metrics::evaluate(&pm, &gm).unwrap();
        prop_assert!(m.f_max >= m.f_avg);
    }

    #[test]
    fn distance_transform_is_exact((w, h, _p, g) in pair_strategy()) {
        let mask: Vec<bool> = g.iter().map(|&v| v >= 0.5).collect();
        let x = Pair::new(w, h, &g, &g);
        match distance_transform(&mask, w, h) {
            None => prop_assert!(mask.iter().all(|&m| !m)),
            Some((dist, idx)) => {
                for r in 0..h {
                    for c in 0..w {
                        let ((nr, nc), d) = oracles::nearest_foreground(&x, r, c).unwrap();
                        prop_assert!((dist[r * w + c] - d).abs() < 1e-9);
                        prop_assert_eq!(idx[r * w + c], nr * w + nc);
                    }
                }
            }
        }
    }

    #[test]
    fn mae_is_symmetric_in_complement((w, h, p, g) in pair_strategy()) {
        let (pm, gm) = maps(w, h, &p, &g);
        let pc: Vec<f64> = p.iter().map(|v| 1.0 - v).collect();
        let gc: Vec<f64> = g.iter().map(|v| 1.0 - v).collect();
        let (pcm, gcm) = maps(w, h, &pc, &gc);
        prop_assert!((mae(&pm, &gm).unwrap() - mae(&pcm, &gcm).unwrap()).abs() < 1e-12);
    }
}
