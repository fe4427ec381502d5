//! Seeded synthetic scenes: ground-truth objects moving through an image
//! with noisy detector candidates, appearance embeddings, and motion.
//!
//! Each object lives in its own horizontal lane so ground-truth boxes never
//! overlap. Per visible object and frame the scene emits `duplicates`
//! candidates. Candidate `k` of an object sits at a persistent slot offset
//! plus per-frame corner jitter, so two candidates cover the object with
//! slight, consistent shifts. Candidate embeddings mix the object identity
//! with a term that depends on how the box is misaligned with the object,
//! which makes a tracklet's embedding remember which slot it followed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::pipeline::{Detection, FrameRecord, GtObject};
use crate::scoring::{ClassDistribution, Embedding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub num_objects: usize,
    pub num_frames: usize,
    pub image_width: f64,
    pub image_height: f64,
    pub num_classes: usize,
    /// Object speed range, px/frame.
    pub speed_min: f64,
    pub speed_max: f64,
    /// Largest angle between an object's initial heading and the horizontal, rad.
    pub max_heading: f64,
    /// Std of the per-frame velocity change, px/frame.
    pub accel_sigma: f64,
    /// Object width range, px.
    pub size_min: f64,
    pub size_max: f64,
    /// Height-to-width ratio range.
    pub aspect_min: f64,
    pub aspect_max: f64,
    /// Per-frame corner jitter of candidate boxes, px.
    pub box_jitter: f64,
    /// Std of the persistent per-candidate corner offset, px.
    pub slot_offset: f64,
    /// Candidates emitted per visible object.
    pub duplicates: usize,
    pub embedding_dim: usize,
    /// Norm scale of the per-candidate embedding noise.
    pub embedding_noise: f64,
    /// Gain of the box-misalignment term in candidate embeddings.
    pub alignment_gain: f64,
    /// Logit margin of the true class in candidate scores.
    pub score_peak: f64,
    /// Std of the per-class logit noise.
    pub score_confusion: f64,
    /// Mean distractor candidates per frame.
    pub distractor_rate: f64,
    /// Std of the noise added to supplied motion vectors, px.
    pub motion_noise: f64,
    /// Per-frame probability an object is fully hidden (no box, no annotation).
    pub dropout_prob: f64,
    /// Per-frame probability an unoccluded object becomes partially
    /// occluded: still annotated, but its candidates' logit mass shifts
    /// toward background.
    pub occlusion_prob: f64,
    /// Mean length of an occlusion, frames (geometric).
    pub occlusion_mean_frames: f64,
    /// Fraction of the logit margin moved to background under occlusion.
    pub occlusion_strength: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            num_objects: 5,
            num_frames: 100,
            image_width: 1280.0,
            image_height: 720.0,
            num_classes: 30,
            speed_min: 0.0,
            speed_max: 12.0,
            max_heading: 0.3,
            accel_sigma: 0.1,
            size_min: 40.0,
            size_max: 110.0,
            aspect_min: 0.75,
            aspect_max: 1.33,
            box_jitter: 0.0,
            slot_offset: 0.0,
            duplicates: 1,
            embedding_dim: 128,
            embedding_noise: 0.0,
            alignment_gain: 0.0,
            score_peak: 6.0,
            score_confusion: 0.0,
            distractor_rate: 0.0,
            motion_noise: 0.0,
            dropout_prob: 0.0,
            occlusion_prob: 0.0,
            occlusion_mean_frames: 1.0,
            occlusion_strength: 0.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    /// Noise-free scene: candidates coincide with ground truth.
    pub fn noiseless(seed: u64) -> Self {
        Self {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let sigmas = [
            ("accel_sigma", self.accel_sigma),
            ("box_jitter", self.box_jitter),
            ("slot_offset", self.slot_offset),
            ("embedding_noise", self.embedding_noise),
            ("alignment_gain", self.alignment_gain),
            ("score_confusion", self.score_confusion),
            ("distractor_rate", self.distractor_rate),
            ("motion_noise", self.motion_noise),
            ("speed_min", self.speed_min),
            ("max_heading", self.max_heading),
            ("occlusion_strength", self.occlusion_strength),
        ];
        for (name, v) in sigmas {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.speed_max < self.speed_min {
            return bad("speed_max must be >= speed_min".into());
        }
        if !(self.size_min > 0.0 && self.size_max >= self.size_min) {
            return bad("need 0 < size_min <= size_max".into());
        }
        if !(self.aspect_min > 0.0
            && self.aspect_max >= self.aspect_min
            && self.aspect_max.is_finite())
        {
            return bad("need 0 < aspect_min <= aspect_max".into());
        }
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return bad("image size must be positive".into());
        }
        if self.num_objects > 0 {
            let lane = self.image_height / self.num_objects as f64;
            if lane < 4.0 {
                return bad(format!(
                    "{} objects do not fit the image height",
                    self.num_objects
                ));
            }
        }
        if self.size_max >= self.image_width / 2.0 {
            return bad("size_max must be below half the image width".into());
        }
        if self.num_classes < 1 || self.embedding_dim < 2 {
            return bad("need num_classes >= 1 and embedding_dim >= 2".into());
        }
        for (name, p) in [
            ("dropout_prob", self.dropout_prob),
            ("occlusion_prob", self.occlusion_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if !(self.occlusion_mean_frames >= 1.0 && self.occlusion_mean_frames.is_finite()) {
            return bad("occlusion_mean_frames must be finite and >= 1".into());
        }
        if !(self.score_peak.is_finite() && self.score_peak >= 0.0) {
            return bad("score_peak must be finite and >= 0".into());
        }
        Ok(())
    }
}

/// Ground-truth identity of one simulated object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtTrack {
    pub track_id: u64,
    pub class: usize,
    pub identity: Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub num_classes: usize,
    pub embedding_dim: usize,
    pub image_width: f64,
    pub image_height: f64,
    pub frames: Vec<FrameRecord>,
    pub tracks: Vec<GtTrack>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionSpeed {
    Slow,
    Medium,
    Fast,
}

impl MotionSpeed {
    pub const ALL: [MotionSpeed; 3] = [MotionSpeed::Slow, MotionSpeed::Medium, MotionSpeed::Fast];

    pub fn name(&self) -> &'static str {
        match self {
            MotionSpeed::Slow => "slow",
            MotionSpeed::Medium => "medium",
            MotionSpeed::Fast => "fast",
        }
    }
}

/// Classifies a ground-truth trajectory by the mean IoU of its boxes on
/// consecutive frames: above 0.8 is slow, below 0.6 fast.
pub fn motion_speed_of(boxes: &[(u64, BBox)]) -> Result<MotionSpeed> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for w in boxes.windows(2) {
        if w[1].0 == w[0].0 + 1 {
            sum += iou(&w[0].1, &w[1].1);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedSpeed(boxes.len()));
    }
    Ok(speed_from_mean_iou(sum / n as f64))
}

pub fn speed_from_mean_iou(mean_iou: f64) -> MotionSpeed {
    if mean_iou > 0.8 {
        MotionSpeed::Slow
    } else if mean_iou >= 0.6 {
        MotionSpeed::Medium
    } else {
        MotionSpeed::Fast
    }
}

struct Object {
    class: usize,
    identity: Vec<f64>,
    /// Columns map the 4-D misalignment into embedding space.
    align_basis: [Vec<f64>; 4],
    slots: Vec<[f64; 4]>,
    lane: (f64, f64),
    occluded: bool,
    w: f64,
    h: f64,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
}

impl Object {
    fn bbox(&self) -> BBox {
        BBox::from_xywh(self.x, self.y, self.w, self.h).expect("object box is valid")
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reflects `pos` into `[lo, hi]`, flipping `vel` on each bounce.
fn reflect(pos: &mut f64, vel: &mut f64, lo: f64, hi: f64) {
    if hi <= lo {
        *pos = lo;
        *vel = 0.0;
        return;
    }
    for _ in 0..8 {
        if *pos < lo {
            *pos = 2.0 * lo - *pos;
            *vel = -*vel;
        } else if *pos > hi {
            *pos = 2.0 * hi - *pos;
            *vel = -*vel;
        } else {
            return;
        }
    }
    *pos = pos.clamp(lo, hi);
}

/// Generates a scene. The same config always yields the same sequence.
pub fn generate(config: &SceneConfig) -> Result<SyntheticSequence> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.embedding_dim;
    let normal = |s: f64| Normal::new(0.0, s).expect("sigma validated");

    let lane_h = if config.num_objects > 0 {
        config.image_height / config.num_objects as f64
    } else {
        config.image_height
    };
    let mut objects: Vec<Object> = Vec::with_capacity(config.num_objects);
    for o in 0..config.num_objects {
        let class = rng.random_range(1..=config.num_classes);
        let mut identity = unit_vector(&mut rng, d);
        for _ in 0..1000 {
            if objects.iter().all(|p| dot(&p.identity, &identity) < 0.5) {
                break;
            }
            identity = unit_vector(&mut rng, d);
        }
        let align_basis = [
            unit_vector(&mut rng, d),
            unit_vector(&mut rng, d),
            unit_vector(&mut rng, d),
            unit_vector(&mut rng, d),
        ];
        let slots = (0..config.duplicates)
            .map(|_| {
                let mut s = [0.0; 4];
                for v in &mut s {
                    *v = normal(config.slot_offset).sample(&mut rng);
                }
                s
            })
            .collect();
        let lane = (o as f64 * lane_h, (o + 1) as f64 * lane_h);
        let w = rng.random_range(config.size_min..=config.size_max);
        let aspect: f64 = rng.random_range(config.aspect_min..=config.aspect_max);
        let h = (w * aspect).min(lane_h * 0.9);
        let speed = rng.random_range(config.speed_min..=config.speed_max);
        let angle: f64 = rng.random_range(-config.max_heading..=config.max_heading);
        let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let x = rng.random_range(0.0..=(config.image_width - w));
        let y = rng.random_range(lane.0..=(lane.1 - h).max(lane.0));
        objects.push(Object {
            class,
            identity,
            align_basis,
            slots,
            lane,
            occluded: false,
            w,
            h,
            x,
            y,
            vx: dir * speed * angle.cos(),
            vy: speed * angle.sin(),
        });
    }

    let tracks = objects
        .iter()
        .enumerate()
        .map(|(i, o)| {
            Ok(GtTrack {
                track_id: i as u64,
                class: o.class,
                identity: Embedding::new(o.identity.clone())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut frames = Vec::with_capacity(config.num_frames);
    for t in 0..config.num_frames {
        let mut prev_boxes = Vec::with_capacity(objects.len());
        for o in objects.iter_mut() {
            prev_boxes.push(o.bbox());
            if t > 0 {
                if config.accel_sigma > 0.0 {
                    o.vx += normal(config.accel_sigma).sample(&mut rng);
                    o.vy += normal(config.accel_sigma).sample(&mut rng);
                }
                o.x += o.vx;
                o.y += o.vy;
                reflect(&mut o.x, &mut o.vx, 0.0, config.image_width - o.w);
                reflect(&mut o.y, &mut o.vy, o.lane.0, o.lane.1 - o.h);
            }
        }

        let mut candidates = Vec::new();
        let mut gt = Vec::new();
        for (i, o) in objects.iter_mut().enumerate() {
            if config.occlusion_prob > 0.0 {
                o.occluded = if o.occluded {
                    !rng.random_bool(1.0 / config.occlusion_mean_frames)
                } else {
                    rng.random_bool(config.occlusion_prob)
                };
            }
            if config.dropout_prob > 0.0 && rng.random_bool(config.dropout_prob) {
                continue;
            }
            let occluded = o.occluded;
            let gt_box = o.bbox();
            gt.push(GtObject {
                track_id: i as u64,
                class: o.class,
                bbox: gt_box,
            });
            let true_motion = prev_boxes[i].displacement_to(&gt_box);
            for slot in &o.slots {
                candidates.push(object_candidate(
                    config,
                    &mut rng,
                    o,
                    slot,
                    &gt_box,
                    true_motion,
                    occluded,
                )?);
            }
        }

        let n_distractors = if config.distractor_rate > 0.0 {
            let p = Poisson::new(config.distractor_rate).expect("rate validated");
            let n: f64 = p.sample(&mut rng);
            n as usize
        } else {
            0
        };
        for _ in 0..n_distractors {
            candidates.push(distractor(config, &mut rng)?);
        }

        frames.push(FrameRecord {
            frame: t as u64,
            candidates,
            ground_truth: Some(gt),
        });
    }

    Ok(SyntheticSequence {
        num_classes: config.num_classes,
        embedding_dim: d,
        image_width: config.image_width,
        image_height: config.image_height,
        frames,
        tracks,
    })
}

fn object_candidate(
    config: &SceneConfig,
    rng: &mut ChaCha8Rng,
    o: &Object,
    slot: &[f64; 4],
    gt: &BBox,
    true_motion: [f64; 4],
    occluded: bool,
) -> Result<Detection> {
    let mut c = [gt.x1(), gt.y1(), gt.x2(), gt.y2()];
    for (v, s) in c.iter_mut().zip(slot) {
        *v += s;
        if config.box_jitter > 0.0 {
            *v += rng.sample::<f64, _>(StandardNormal) * config.box_jitter;
        }
    }
    // Keep at least a 1 px box with ordered corners.
    if c[2] < c[0] + 1.0 {
        let m = (c[0] + c[2]) / 2.0;
        c[0] = m - 0.5;
        c[2] = m + 0.5;
    }
    if c[3] < c[1] + 1.0 {
        let m = (c[1] + c[3]) / 2.0;
        c[1] = m - 0.5;
        c[3] = m + 0.5;
    }
    let bbox = BBox::new(c[0], c[1], c[2], c[3])?;

    let mut logits = vec![0.0; config.num_classes + 1];
    if occluded {
        logits[o.class] = config.score_peak * (1.0 - config.occlusion_strength);
        logits[0] = config.score_peak * config.occlusion_strength;
    } else {
        logits[o.class] = config.score_peak;
    }
    if config.score_confusion > 0.0 {
        for l in &mut logits {
            *l += rng.sample::<f64, _>(StandardNormal) * config.score_confusion;
        }
    }
    let scores = ClassDistribution::from_logits(&logits)?;

    let (gcx, gcy) = gt.center();
    let (bcx, bcy) = bbox.center();
    let misalign = [
        (bcx - gcx) / gt.width(),
        (bcy - gcy) / gt.height(),
        (bbox.width() / gt.width()).ln(),
        (bbox.height() / gt.height()).ln(),
    ];
    let mut e = o.identity.clone();
    if config.alignment_gain > 0.0 {
        for (m, basis) in misalign.iter().zip(&o.align_basis) {
            for (v, b) in e.iter_mut().zip(basis) {
                *v += config.alignment_gain * m * b;
            }
        }
    }
    add_embedding_noise(config, rng, &mut e);
    let embedding = Embedding::new(e)?;

    let mut motion = true_motion;
    if config.motion_noise > 0.0 {
        for v in &mut motion {
            *v += rng.sample::<f64, _>(StandardNormal) * config.motion_noise;
        }
    }
    Ok(Detection {
        bbox,
        scores,
        embedding,
        motion: Some(motion),
    })
}

fn add_embedding_noise(config: &SceneConfig, rng: &mut ChaCha8Rng, e: &mut [f64]) {
    if config.embedding_noise > 0.0 {
        let s = config.embedding_noise / (config.embedding_dim as f64).sqrt();
        for v in e.iter_mut() {
            *v += rng.sample::<f64, _>(StandardNormal) * s;
        }
    }
}

fn distractor(config: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<Detection> {
    let w = rng.random_range(config.size_min..=config.size_max);
    let h = (w * rng.random_range(config.aspect_min..=config.aspect_max)).min(config.image_height);
    let x = rng.random_range(0.0..=(config.image_width - w));
    let y = rng.random_range(0.0..=(config.image_height - h).max(0.0));
    let bbox = BBox::from_xywh(x, y, w, h)?;

    let mut logits = vec![0.0; config.num_classes + 1];
    logits[0] = config.score_peak;
    if config.score_confusion > 0.0 {
        for l in &mut logits {
            *l += rng.sample::<f64, _>(StandardNormal) * config.score_confusion;
        }
    }
    let scores = ClassDistribution::from_logits(&logits)?;
    let embedding = Embedding::new(unit_vector(rng, config.embedding_dim))?;
    let mut motion = [0.0; 4];
    if config.motion_noise > 0.0 {
        for v in &mut motion {
            *v = rng.sample::<f64, _>(StandardNormal) * config.motion_noise;
        }
    }
    Ok(Detection {
        bbox,
        scores,
        embedding,
        motion: Some(motion),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_candidates_equal_gt() {
        let seq = generate(&SceneConfig::noiseless(3)).unwrap();
        assert_eq!(seq.frames.len(), 100);
        for f in &seq.frames {
            let gt = f.ground_truth.as_ref().unwrap();
            assert_eq!(gt.len(), f.candidates.len());
            for (g, c) in gt.iter().zip(&f.candidates) {
                assert_eq!(g.bbox, c.bbox);
                assert_eq!(c.scores.top_foreground().0, g.class);
            }
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let c = SceneConfig {
            box_jitter: 2.0,
            duplicates: 2,
            embedding_noise: 0.2,
            distractor_rate: 1.0,
            score_confusion: 0.5,
            motion_noise: 1.0,
            seed: 11,
            ..Default::default()
        };
        assert_eq!(generate(&c).unwrap().frames, generate(&c).unwrap().frames);
        let other = SceneConfig {
            seed: 12,
            ..c.clone()
        };
        assert_ne!(
            generate(&c).unwrap().frames,
            generate(&other).unwrap().frames
        );
    }

    #[test]
    fn gt_stays_in_image_and_lanes_do_not_overlap() {
        let c = SceneConfig {
            speed_min: 10.0,
            speed_max: 30.0,
            accel_sigma: 1.0,
            seed: 5,
            ..Default::default()
        };
        let seq = generate(&c).unwrap();
        for f in &seq.frames {
            let gt = f.ground_truth.as_ref().unwrap();
            for g in gt {
                assert!(g.bbox.x1() >= -1e-9 && g.bbox.x2() <= c.image_width + 1e-9);
                assert!(g.bbox.y1() >= -1e-9 && g.bbox.y2() <= c.image_height + 1e-9);
            }
            for (i, a) in gt.iter().enumerate() {
                for b in &gt[i + 1..] {
                    assert_eq!(iou(&a.bbox, &b.bbox), 0.0);
                }
            }
        }
    }

    #[test]
    fn identities_are_distinct() {
        let seq = generate(&SceneConfig {
            num_objects: 8,
            embedding_dim: 16,
            ..SceneConfig::noiseless(1)
        })
        .unwrap();
        for (i, a) in seq.tracks.iter().enumerate() {
            for b in &seq.tracks[i + 1..] {
                assert!(a.identity.cosine(&b.identity).unwrap() < 0.5);
            }
        }
    }

    #[test]
    fn dropout_leaves_gaps_in_gt() {
        let c = SceneConfig {
            dropout_prob: 0.3,
            seed: 2,
            ..Default::default()
        };
        let seq = generate(&c).unwrap();
        let visible: usize = seq
            .frames
            .iter()
            .map(|f| f.ground_truth.as_ref().unwrap().len())
            .sum();
        assert!(visible < 500 && visible > 250, "{visible}");
    }

    #[test]
    fn speed_thresholds() {
        let b = |x: f64| BBox::new(x, 0.0, x + 10.0, 10.0).unwrap();
        let still: Vec<_> = (0..5).map(|t| (t, b(0.0))).collect();
        assert_eq!(motion_speed_of(&still).unwrap(), MotionSpeed::Slow);
        assert_eq!(speed_from_mean_iou(0.7), MotionSpeed::Medium);
        assert_eq!(speed_from_mean_iou(0.8), MotionSpeed::Medium);
        assert_eq!(speed_from_mean_iou(0.6), MotionSpeed::Medium);
        assert_eq!(speed_from_mean_iou(0.5999), MotionSpeed::Fast);
        // shift v on width 10: IoU = (10 - v) / (10 + v) = 0.5 at v = 10/3
        let v = 10.0 / 3.0;
        let fast: Vec<_> = (0..5).map(|t| (t, b(t as f64 * v))).collect();
        assert_eq!(motion_speed_of(&fast).unwrap(), MotionSpeed::Fast);
        assert!(matches!(
            motion_speed_of(&still[..1]),
            Err(Error::UndefinedSpeed(1))
        ));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&SceneConfig {
            box_jitter: -1.0,
            ..Default::default()
        })
        .is_err());
        assert!(generate(&SceneConfig {
            dropout_prob: 1.5,
            ..Default::default()
        })
        .is_err());
        assert!(generate(&SceneConfig {
            size_min: 0.0,
            ..Default::default()
        })
        .is_err());
    }
}
