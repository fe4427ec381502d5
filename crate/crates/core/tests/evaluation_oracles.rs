mod common;

use common::b;
use proptest::prelude::*;
use trackdet::evaluation::{
    average_precision, map_track, match_errors, stability, temporal_iou, EvalConfig, TrackSeq,
};
use trackdet::BBox;

fn seq(id: u64, conf: f64, frames: impl IntoIterator<Item = u64>, dx: f64) -> TrackSeq {
    TrackSeq {
        id,
        class: 1,
        confidence: conf,
        boxes: frames
            .into_iter()
            .map(|f| (f, b(10.0 + dx, 10.0, 20.0 + dx, 30.0)))
            .collect(),
    }
}

#[test]
fn fragmented_prediction_by_enumeration() {
    let gt = vec![seq(0, 1.0, 0..10, 0.0)];
    let preds = vec![seq(1, 0.9, 0..5, 0.0), seq(2, 0.8, 5..10, 0.0)];
    let cfg = EvalConfig::default();
    assert_eq!(temporal_iou(&preds[0], &gt[0], 0.5), 0.5);
    assert_eq!(temporal_iou(&preds[1], &gt[0], 0.5), 0.5);
    // tau 0.25 and 0.5: the higher-ranked fragment is the only TP, so AP 1.
    // tau 0.75: neither fragment qualifies, AP 0.
    let r = map_track(&preds, &gt, &cfg).unwrap();
    assert_eq!(r.per_threshold, vec![(0.25, 1.0), (0.5, 1.0), (0.75, 0.0)]);
    assert!((r.mean - 2.0 / 3.0).abs() < 1e-12);

    // Ranking the second fragment first changes nothing at these thresholds.
    let swapped = vec![seq(1, 0.7, 0..5, 0.0), seq(2, 0.8, 5..10, 0.0)];
    assert!((map_track(&swapped, &gt, &cfg).unwrap().mean - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn half_covered_tracklet_example() {
    let gt = seq(0, 1.0, 0..10, 0.0);
    let mut pred = seq(1, 1.0, 0..10, 0.0);
    for (f, bx) in pred.boxes.iter_mut() {
        if *f >= 5 {
            *bx = b(500.0, 500.0, 510.0, 520.0);
        }
    }
    assert_eq!(temporal_iou(&pred, &gt, 0.5), 0.5);
    assert_eq!(temporal_iou(&gt, &seq(1, 1.0, 20..30, 0.0), 0.5), 0.0);
}

#[test]
fn alternating_presence_has_fragment_error_one() {
    let gt = seq(0, 1.0, 0..10, 0.0);
    let pred = seq(1, 1.0, (0..10).step_by(2), 0.0);
    assert_eq!(match_errors(&pred, &gt, 0.5).fragment, 1.0);
}

#[test]
fn constant_offset_has_zero_center_error() {
    let gt = seq(0, 1.0, 0..10, 0.0);
    let pred = seq(1, 1.0, 0..10, 1.0);
    let m = match_errors(&pred, &gt, 0.5);
    assert!(m.center.unwrap().abs() < 1e-12);
    assert!(m.aspect.unwrap().abs() < 1e-12);
    assert_eq!(m.fragment, 0.0);
}

#[test]
fn perfect_predictions_are_error_free() {
    let gt = vec![seq(0, 1.0, 0..10, 0.0), seq(1, 1.0, 3..9, 200.0)];
    let s = stability(&gt, &gt, &EvalConfig::default()).unwrap();
    assert_eq!(
        (s.fragment_error, s.center_error, s.aspect_error),
        (0.0, 0.0, 0.0)
    );
    assert_eq!(
        map_track(&gt, &gt, &EvalConfig::default()).unwrap().mean,
        1.0
    );
    assert_eq!(
        map_track(&[], &gt, &EvalConfig::default()).unwrap().mean,
        0.0
    );
}

fn jittered(frames: &[u64], seed: &[f64]) -> TrackSeq {
    TrackSeq {
        id: 9,
        class: 1,
        confidence: 0.5,
        boxes: frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let j = seed[i % seed.len()];
                (
                    *f,
                    BBox::new(10.0 + j, 10.0 - j, 20.0 + j, 30.0 + 0.5 * j).unwrap(),
                )
            })
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn ap_respects_false_and_true_positives(
        tp in prop::collection::vec(prop::bool::ANY, 0..30),
        extra in 0usize..5,
        at in 0usize..31,
    ) {
        let hits = tp.iter().filter(|t| **t).count();
        let num_gt = hits + extra + 1;
        let base = average_precision(&tp, num_gt);
        prop_assert!((0.0..=1.0).contains(&base));

        let mut with_fp = tp.clone();
        with_fp.insert(at.min(tp.len()), false);
        prop_assert!(average_precision(&with_fp, num_gt) <= base + 1e-12);

        let mut with_tp = vec![true];
        with_tp.extend(&tp);
        prop_assert!(average_precision(&with_tp, num_gt) >= base - 1e-12);
    }

    #[test]
    fn temporal_iou_is_symmetric(
        fa in prop::collection::btree_set(0u64..30, 1..20),
        fb in prop::collection::btree_set(0u64..30, 1..20),
        ja in prop::collection::vec(-6.0..6.0f64, 1..5),
        jb in prop::collection::vec(-6.0..6.0f64, 1..5),
    ) {
        let fa: Vec<u64> = fa.into_iter().collect();
        let fb: Vec<u64> = fb.into_iter().collect();
        let (a, c) = (jittered(&fa, &ja), jittered(&fb, &jb));
        let x = temporal_iou(&a, &c, 0.5);
        prop_assert_eq!(x, temporal_iou(&c, &a, 0.5));
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(temporal_iou(&a, &a, 0.5), 1.0);
        if x == 1.0 {
            prop_assert_eq!(&fa, &fb);
        }
    }

    #[test]
    fn fragment_error_depends_only_on_presence(
        present in prop::collection::vec(prop::bool::ANY, 2..25),
        jit in prop::collection::vec(-1.0..1.0f64, 1..6),
    ) {
        let n = present.len() as u64;
        let gt = seq(0, 1.0, 0..n, 0.0);
        let frames: Vec<u64> = (0..n).filter(|f| present[*f as usize]).collect();
        let plain = seq(1, 1.0, frames.iter().copied(), 0.0);
        let wobbly = jittered(&frames, &jit);
        let f1 = match_errors(&plain, &gt, 0.5).fragment;
        let f2 = match_errors(&wobbly, &gt, 0.5).fragment;
        prop_assert_eq!(f1, f2);
        let transitions = present.windows(2).filter(|w| w[0] != w[1]).count();
        prop_assert!((f1 - transitions as f64 / (n - 1) as f64).abs() < 1e-12);
    }
}
