mod common;

use common::{d, dist, e, embedding};
use proptest::prelude::*;
use trackdet::scoring::{
    association_weights, conditioned_score, foreground_probability, fuse_scores, tracking_loss,
    tracking_loss_grad,
};
use trackdet::{ClassDistribution, Embedding, FusionParams};

fn params(c: usize, alpha: f64) -> FusionParams {
    FusionParams {
        num_classes: c,
        alpha,
        ..FusionParams::default()
    }
}

fn sums_to_one(p: &ClassDistribution) -> bool {
    (p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9 && p.probs().iter().all(|x| *x >= 0.0)
}

/// Straight-line mixture: every term expanded by hand, no shared helpers.
fn mixture_by_terms(p_det: &[f64], tr: &[&[f64]], w: &[f64], alpha: f64) -> Vec<f64> {
    let k = p_det.len();
    let mut out = vec![0.0; k];
    for (j, wj) in w.iter().enumerate() {
        let prior: Vec<f64> = if j == 0 {
            vec![1.0 / k as f64; k]
        } else {
            tr[j - 1].to_vec()
        };
        let prod: Vec<f64> = (0..k).map(|c| p_det[c] * prior[c].powf(alpha)).collect();
        let z: f64 = prod.iter().sum();
        for c in 0..k {
            out[c] += wj * prod[c] / z;
        }
    }
    out
}

#[test]
fn paper_default_parameters() {
    let p = FusionParams::default();
    assert_eq!(
        (p.alpha, p.beta, p.gamma, p.eta, p.r_null),
        (1.0, 0.99, 8.0, 0.8, 0.3)
    );
    assert_eq!(p.nms_iou, 0.3);
}

#[test]
fn single_tracklet_weight_example() {
    let p = FusionParams::default();
    let x = e(&[1.0, 0.0]);
    let w = association_weights(&x, &[&x], &p).unwrap();
    let z = 0.3f64.exp() + 8.0f64.exp();
    assert!((w[0] - 0.3f64.exp() / z).abs() < 1e-12);
    assert!((w[1] - 8.0f64.exp() / z).abs() < 1e-12);
    assert!((w[0] - 0.000453).abs() < 1e-6);
    assert_eq!(association_weights(&x, &[], &p).unwrap(), vec![1.0]);
}

#[test]
fn three_term_mixture_matches_expansion() {
    let p_det = [0.5, 0.5];
    let (t1, t2) = ([0.9, 0.1], [0.2, 0.8]);
    let w = [0.2, 0.5, 0.3];
    let got = conditioned_score(&d(&p_det), &[&d(&t1), &d(&t2)], &w, &params(1, 1.0)).unwrap();
    let want = mixture_by_terms(&p_det, &[&t1, &t2], &w, 1.0);
    for (g, x) in got.probs().iter().zip(&want) {
        assert!((g - x).abs() < 1e-9);
    }
    // 0.2*0.5 + 0.5*0.9 + 0.3*0.2 by hand.
    assert!((got.probs()[0] - 0.61).abs() < 1e-12);
}

#[test]
fn fuse_and_foreground_examples() {
    let f = fuse_scores(&d(&[0.5, 0.5]), &d(&[0.8, 0.2]), 1.0).unwrap();
    assert!((f.probs()[0] - 0.8).abs() < 1e-12);
    assert!((foreground_probability(&ClassDistribution::uniform(30)) - 30.0 / 31.0).abs() < 1e-12);
    assert_eq!(foreground_probability(&d(&[0.25, 0.5, 0.25])), 0.75);
}

#[test]
fn loss_examples() {
    assert_eq!(tracking_loss(1.0, 0.6), 0.0);
    assert_eq!(tracking_loss(-0.2, 0.3), 0.0);
    assert!((tracking_loss(0.5, 0.4) - 0.25).abs() < 1e-15);
}

fn check_gradient(cos: f64, iou: f64) -> Result<(), TestCaseError> {
    let h = 1e-6;
    let fd = (tracking_loss(cos + h, iou) - tracking_loss(cos - h, iou)) / (2.0 * h);
    let an = tracking_loss_grad(cos, iou);
    let rel = (fd - an).abs() / an.abs().max(1e-12);
    prop_assert!(rel < 1e-5, "cos={cos} iou={iou}: fd {fd} vs analytic {an}");
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn gradient_matches_finite_differences_positive_branch(cos in -0.99..0.99f64, iou in 0.5..1.0f64) {
        check_gradient(cos, iou)?;
    }

    #[test]
    fn gradient_matches_finite_differences_negative_branch(cos in 0.01..0.99f64, iou in 0.0..0.4999f64) {
        check_gradient(cos, iou)?;
    }

    #[test]
    fn uniform_prior_is_neutral(p in dist(4), alpha in 0.0..4.0f64) {
        let f = fuse_scores(&p, &ClassDistribution::uniform(4), alpha).unwrap();
        for (a, x) in f.probs().iter().zip(p.probs()) {
            prop_assert!((a - x).abs() < 1e-12);
        }
        let only_null = conditioned_score(&p, &[], &[1.0], &params(4, alpha)).unwrap();
        for (a, x) in only_null.probs().iter().zip(p.probs()) {
            prop_assert!((a - x).abs() < 1e-9);
        }
    }

    #[test]
    fn conditioned_score_is_convex_mixture(
        p in dist(3),
        trs in prop::collection::vec(dist(3), 0..5),
        raw in prop::collection::vec(0.0..1.0f64, 6),
        alpha in 0.0..3.0f64,
    ) {
        let mut w: Vec<f64> = raw[..trs.len() + 1].iter().map(|x| x + 1e-3).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let refs: Vec<&ClassDistribution> = trs.iter().collect();
        let got = conditioned_score(&p, &refs, &w, &params(3, alpha)).unwrap();
        prop_assert!(sums_to_one(&got));

        let mut fused = vec![fuse_scores(&p, &ClassDistribution::uniform(3), alpha).unwrap()];
        for t in &trs {
            fused.push(fuse_scores(&p, t, alpha).unwrap());
        }
        for f in &fused {
            prop_assert!(sums_to_one(f));
        }
        for c in 0..4 {
            let lo = fused.iter().map(|f| f.probs()[c]).fold(f64::INFINITY, f64::min);
            let hi = fused.iter().map(|f| f.probs()[c]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(got.probs()[c] >= lo - 1e-12 && got.probs()[c] <= hi + 1e-12);
        }
        let tr_vecs: Vec<&[f64]> = trs.iter().map(|t| t.probs()).collect();
        let want = mixture_by_terms(p.probs(), &tr_vecs, &w, alpha);
        for (g, x) in got.probs().iter().zip(&want) {
            prop_assert!((g - x).abs() < 1e-9);
        }
    }

    #[test]
    fn weights_normalize_and_rise_with_similarity(
        x in embedding(6),
        trs in prop::collection::vec(embedding(6), 1..6),
        pick in 0usize..6,
        bump in 0.05..0.9f64,
    ) {
        let p = FusionParams::default();
        let refs: Vec<&Embedding> = trs.iter().collect();
        let w = association_weights(&x, &refs, &p).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        // Pull tracklet k toward x so its cosine strictly increases.
        let k = pick % trs.len();
        let before = x.cosine(&trs[k]).unwrap();
        prop_assume!(before < 0.999);
        let moved: Vec<f64> = trs[k].values().iter().zip(x.values())
            .map(|(t, b)| (1.0 - bump) * t + bump * b).collect();
        prop_assume!(moved.iter().map(|v| v * v).sum::<f64>() > 1e-6);
        let moved = Embedding::new(moved).unwrap();
        prop_assume!(x.cosine(&moved).unwrap() > before + 1e-9);
        let mut refs2 = refs.clone();
        refs2[k] = &moved;
        let w2 = association_weights(&x, &refs2, &p).unwrap();
        prop_assert!((w2.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for j in 0..w.len() {
            if j == k + 1 {
                prop_assert!(w2[j] > w[j]);
            } else {
                prop_assert!(w2[j] < w[j]);
            }
        }
    }

    #[test]
    fn weights_ignore_embedding_scale(
        raw in prop::collection::vec(-1.0..1.0f64, 5),
        trs in prop::collection::vec(embedding(5), 0..4),
        scale in 0.01..100.0f64,
    ) {
        prop_assume!(raw.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let p = FusionParams::default();
        let refs: Vec<&Embedding> = trs.iter().collect();
        let a = association_weights(&Embedding::new(raw.clone()).unwrap(), &refs, &p).unwrap();
        let scaled: Vec<f64> = raw.iter().map(|v| v * scale).collect();
        let c = association_weights(&Embedding::new(scaled).unwrap(), &refs, &p).unwrap();
        for (x, y) in a.iter().zip(&c) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_tracklets_get_equal_weight(x in embedding(4), t in embedding(4)) {
        let w = association_weights(&x, &[&t, &t], &FusionParams::default()).unwrap();
        prop_assert_eq!(w[1], w[2]);
    }
}
