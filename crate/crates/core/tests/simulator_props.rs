use proptest::prelude::*;
use trackdet::geometry::iou;
use trackdet::simulator::{generate, SceneConfig, SyntheticSequence};

/// Each candidate paired with the annotated object it overlaps most.
fn pairs(seq: &SyntheticSequence) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for f in &seq.frames {
        let gt = f.ground_truth.as_ref().unwrap();
        for c in &f.candidates {
            let Some((g, v)) = gt
                .iter()
                .map(|g| (g, iou(&c.bbox, &g.bbox)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
            else {
                continue;
            };
            let ident = &seq.tracks[g.track_id as usize].identity;
            out.push((v, c.embedding.cosine(ident).unwrap()));
        }
    }
    out
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn small(seed: u64) -> SceneConfig {
    SceneConfig {
        num_objects: 3,
        num_frames: 20,
        embedding_dim: 32,
        seed,
        ..SceneConfig::default()
    }
}

/// Mean candidate IoU of a 100x100 object under 2 px corner jitter.
/// Independent estimate: 2e6 samples of four N(0, 2^2) corner offsets.
const JITTER2_MEAN_IOU: f64 = 0.9389;

#[test]
fn jitter_iou_matches_pinned_estimate() {
    let cfg = SceneConfig {
        num_objects: 1,
        num_frames: 1000,
        size_min: 100.0,
        size_max: 100.0,
        aspect_min: 1.0,
        aspect_max: 1.0,
        box_jitter: 2.0,
        seed: 11,
        ..SceneConfig::default()
    };
    let seq = generate(&cfg).unwrap();
    let p = pairs(&seq);
    assert_eq!(p.len(), 1000);
    let m = mean(p.iter().map(|x| x.0));
    assert!((0.85..=1.0).contains(&m));
    assert!((m - JITTER2_MEAN_IOU).abs() <= 0.03, "mean IoU {m}");
}

#[test]
fn more_jitter_lowers_mean_iou() {
    let sigmas = [0.0, 1.0, 2.0, 4.0, 8.0];
    let means: Vec<f64> = sigmas
        .iter()
        .map(|&s| {
            mean((0..20).flat_map(|seed| {
                let cfg = SceneConfig {
                    box_jitter: s,
                    ..small(seed)
                };
                pairs(&generate(&cfg).unwrap()).into_iter().map(|p| p.0)
            }))
        })
        .collect();
    assert_eq!(means[0], 1.0);
    for w in means.windows(2) {
        assert!(w[1] <= w[0], "{means:?}");
    }
}

#[test]
fn more_embedding_noise_lowers_identity_cosine() {
    let noise = [0.0, 0.1, 0.2, 0.5, 1.0];
    let means: Vec<f64> = noise
        .iter()
        .map(|&n| {
            mean((0..20).flat_map(|seed| {
                let cfg = SceneConfig {
                    embedding_noise: n,
                    ..small(seed)
                };
                pairs(&generate(&cfg).unwrap()).into_iter().map(|p| p.1)
            }))
        })
        .collect();
    assert!((means[0] - 1.0).abs() < 1e-12);
    for w in means.windows(2) {
        assert!(w[1] <= w[0], "{means:?}");
    }
}

fn noisy() -> impl Strategy<Value = SceneConfig> {
    (
        0u64..1000,
        1usize..5,
        0.0..4.0f64,
        1usize..3,
        0.0..0.5f64,
        0.0..2.0f64,
        0.0..0.2f64,
    )
        .prop_map(
            |(seed, n, jitter, dup, noise, distractors, drop)| SceneConfig {
                num_objects: n,
                num_frames: 15,
                embedding_dim: 16,
                num_classes: 5,
                box_jitter: jitter,
                duplicates: dup,
                embedding_noise: noise,
                score_confusion: 1.0,
                distractor_rate: distractors,
                motion_noise: 2.0,
                dropout_prob: drop,
                occlusion_prob: 0.1,
                occlusion_strength: 0.5,
                speed_max: 30.0,
                seed,
                ..SceneConfig::default()
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenes_are_deterministic_and_valid(cfg in noisy()) {
        let a = generate(&cfg).unwrap();
        prop_assert_eq!(&a, &generate(&cfg).unwrap());
        for f in &a.frames {
            for c in &f.candidates {
                prop_assert_eq!(c.scores.len(), cfg.num_classes + 1);
                prop_assert!((c.scores.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
                let n = c.embedding.values().iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!((n - 1.0).abs() < 1e-6);
                prop_assert!(c.motion.is_some());
            }
            for g in f.ground_truth.as_ref().unwrap() {
                prop_assert!(g.bbox.x1() >= -1e-9 && g.bbox.x2() <= cfg.image_width + 1e-9);
                prop_assert!(g.bbox.y1() >= -1e-9 && g.bbox.y2() <= cfg.image_height + 1e-9);
            }
        }
        for (i, t) in a.tracks.iter().enumerate() {
            for u in &a.tracks[..i] {
                prop_assert!(t.identity.cosine(&u.identity).unwrap() < 0.5);
            }
        }
    }
}
