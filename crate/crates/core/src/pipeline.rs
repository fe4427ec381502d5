//! Online detection-and-tracking procedures.
//!
//! [`Tracker`] consumes one [`FrameRecord`] at a time. In
//! [`Mode::Integrated`] every candidate is rescored against the tracklets
//! of the previous frame before NMS; in [`Mode::Sequential`] the raw
//! detector scores go to NMS, optionally mixed with boxes propagated from
//! existing tracklets, and associated boxes can be rescored afterwards.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::{build_graph, solve, DetNode, TrackNode};
use crate::error::{invalid, Error, Result};
use crate::geometry::{iou, nms, BBox};
use crate::scoring::{
    association_weights, conditioned_foreground, conditioned_score, foreground_probability,
    ClassDistribution, Embedding, FusionParams,
};
use crate::tracklets::{TrackId, Tracklet, TrackletStore};

/// A candidate box from the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub scores: ClassDistribution,
    pub embedding: Embedding,
    /// Displacement `(dx, dy, dw, dh)` of the content under this box since
    /// the previous frame, as an optical-flow estimate would give it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion: Option<[f64; 4]>,
}

/// One annotated object in a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub track_id: u64,
    pub class: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: u64,
    pub candidates: Vec<Detection>,
    #[serde(rename = "gt", default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<GtObject>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sequential,
    Integrated,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Mode::Sequential),
            "integrated" => Ok(Mode::Integrated),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub fusion: FusionParams,
    pub mode: Mode,
    /// Sequential only: add boxes propagated from tracklets before NMS.
    pub propagate_boxes: bool,
    /// Sequential only: report associated boxes with their tracklet's mean score.
    pub rescore_boxes: bool,
    /// Tracklets unmatched for more than this many frames are terminated.
    pub max_inactive: u32,
    /// Output rows below this confidence are dropped.
    pub min_output_score: f64,
    /// Tracklets with fewer boxes are dropped from the output.
    pub min_tracklet_length: usize,
    /// Foreground probability a new detection needs to start a tracklet.
    /// Defaults to `min_output_score / 2`.
    pub spawn_min_fg: Option<f64>,
    /// Integrated only: drop candidates whose tracklet-conditioned
    /// foreground probability falls below this before classification.
    pub proposal_min_fg: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fusion: FusionParams::default(),
            mode: Mode::Integrated,
            propagate_boxes: false,
            rescore_boxes: false,
            max_inactive: 10,
            min_output_score: 0.0,
            min_tracklet_length: 1,
            spawn_min_fg: None,
            proposal_min_fg: None,
        }
    }
}

impl PipelineConfig {
    pub fn integrated(fusion: FusionParams) -> Self {
        Self {
            fusion,
            ..Default::default()
        }
    }

    pub fn sequential(fusion: FusionParams, propagate: bool, rescore: bool) -> Self {
        Self {
            fusion,
            mode: Mode::Sequential,
            propagate_boxes: propagate,
            rescore_boxes: rescore,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.mode == Mode::Integrated && (self.propagate_boxes || self.rescore_boxes) {
            return bad("box propagation and box rescoring only apply to sequential mode");
        }
        if self.mode == Mode::Sequential && self.proposal_min_fg.is_some() {
            return bad("proposal conditioning only applies to integrated mode");
        }
        if !(0.0..=1.0).contains(&self.min_output_score) {
            return bad("min_output_score must be in [0, 1]");
        }
        for v in [self.spawn_min_fg, self.proposal_min_fg]
            .into_iter()
            .flatten()
        {
            if !(0.0..=1.0).contains(&v) {
                return bad("foreground thresholds must be in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn spawn_threshold(&self) -> f64 {
        self.spawn_min_fg.unwrap_or(self.min_output_score / 2.0)
    }
}

/// Where a kept box came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoxSource {
    /// Index into the frame's candidate list.
    Candidate(usize),
    /// Propagated from this tracklet.
    Propagated(TrackId),
}

/// A box kept after NMS, with the score the pipeline reports for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputBox {
    pub bbox: BBox,
    pub score: ClassDistribution,
    pub track_id: Option<TrackId>,
    pub source: BoxSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOutput {
    pub frame: u64,
    pub boxes: Vec<OutputBox>,
}

/// One row of the track output file. `track_id` is `None` for kept boxes
/// that did not join a tracklet.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRow {
    pub frame: u64,
    pub track_id: Option<TrackId>,
    pub bbox: BBox,
    pub confidence: f64,
    /// Foreground class, 1-based.
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingOutput {
    pub tracklets: Vec<Tracklet>,
    pub frames: Vec<FrameOutput>,
}

impl TrackingOutput {
    /// Output rows after the score and tracklet-length filters, ordered by
    /// frame then by descending score within the frame.
    pub fn rows(&self, config: &PipelineConfig) -> Vec<TrackRow> {
        let short: std::collections::HashSet<TrackId> = self
            .tracklets
            .iter()
            .filter(|t| t.len() < config.min_tracklet_length)
            .map(|t| t.id())
            .collect();
        let mut rows = Vec::new();
        for f in &self.frames {
            for b in &f.boxes {
                let (class, confidence) = b.score.top_foreground();
                if confidence < config.min_output_score {
                    continue;
                }
                if b.track_id.is_some_and(|id| short.contains(&id)) {
                    continue;
                }
                rows.push(TrackRow {
                    frame: f.frame,
                    track_id: b.track_id,
                    bbox: b.bbox,
                    confidence,
                    class,
                });
            }
        }
        rows
    }
}

/// Source of per-tracklet displacement used by box propagation.
pub trait MotionProvider {
    fn motion_for(&self, tracklet: &Tracklet, frame: &FrameRecord) -> Option<[f64; 4]>;
}

/// Samples the motion supplied with the frame's candidates: the candidate
/// whose back-projected box overlaps the tracklet's last box the most
/// lends its displacement. Only used for tracklets active on the
/// previous frame.
#[derive(Debug, Clone, Copy, Default)]
pub struct SuppliedMotion;

impl MotionProvider for SuppliedMotion {
    fn motion_for(&self, tracklet: &Tracklet, frame: &FrameRecord) -> Option<[f64; 4]> {
        if tracklet.last_active_frame() + 1 != frame.frame {
            return None;
        }
        let last = tracklet.last_box();
        let mut best: Option<(f64, [f64; 4])> = None;
        for c in &frame.candidates {
            let Some(m) = c.motion else { continue };
            let (cx, cy) = c.bbox.center();
            let Ok(prev) = BBox::from_center(
                cx - m[0],
                cy - m[1],
                c.bbox.width() - m[2],
                c.bbox.height() - m[3],
            ) else {
                continue;
            };
            let o = crate::geometry::iou(&prev, last);
            if o > 0.0 && best.is_none_or(|(b, _)| o > b) {
                best = Some((o, m));
            }
        }
        best.map(|(_, m)| m)
    }
}

/// Extrapolates the displacement between a tracklet's last two boxes.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantVelocity;

impl MotionProvider for ConstantVelocity {
    fn motion_for(&self, tracklet: &Tracklet, frame: &FrameRecord) -> Option<[f64; 4]> {
        let e = tracklet.entries();
        if e.len() < 2 {
            return None;
        }
        let (a, b) = (&e[e.len() - 2], &e[e.len() - 1]);
        let per_frame = 1.0 / (b.frame - a.frame) as f64;
        let ahead = frame.frame.saturating_sub(b.frame) as f64;
        let d = a.bbox.displacement_to(&b.bbox);
        Some(d.map(|x| x * per_frame * ahead))
    }
}

/// Supplied motion, then constant velocity, then zero displacement.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultMotion;

impl MotionProvider for DefaultMotion {
    fn motion_for(&self, tracklet: &Tracklet, frame: &FrameRecord) -> Option<[f64; 4]> {
        SuppliedMotion
            .motion_for(tracklet, frame)
            .or_else(|| ConstantVelocity.motion_for(tracklet, frame))
            .or(Some([0.0; 4]))
    }
}

/// Moves each tracklet's last box into `frame`. The propagated box carries
/// the tracklet's class distribution and embedding.
pub fn propagate_box(
    tracklets: &[Tracklet],
    motion: &dyn MotionProvider,
    frame: &FrameRecord,
) -> Result<Vec<(TrackId, Detection)>> {
    tracklets
        .iter()
        .map(|t| {
            let m = motion.motion_for(t, frame).unwrap_or([0.0; 4]);
            Ok((
                t.id(),
                Detection {
                    bbox: t.last_box().displaced(m)?,
                    scores: t.p_tr().clone(),
                    embedding: t.embedding().clone(),
                    motion: None,
                },
            ))
        })
        .collect()
}

/// Score reported for a box newly associated to `tracklet`: the unweighted
/// mean of the scores of all its boxes.
pub fn rescore_box(tracklet: &Tracklet) -> ClassDistribution {
    tracklet.mean_score()
}

/// Online engine for one sequence.
/// A box that survived NMS, waiting for association.
struct KeptBox<'a> {
    det: &'a Detection,
    score: ClassDistribution,
    source: BoxSource,
    /// Backed by the detector at this frame.
    detected: bool,
}

pub struct Tracker {
    config: PipelineConfig,
    store: TrackletStore,
    frames: Vec<FrameOutput>,
    last_frame: Option<u64>,
    embedding_dim: Option<usize>,
    motion: Box<dyn MotionProvider + Send + Sync>,
}

impl Tracker {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            store: TrackletStore::new(),
            frames: Vec::new(),
            last_frame: None,
            embedding_dim: None,
            motion: Box::new(DefaultMotion),
        })
    }

    pub fn with_motion(mut self, motion: Box<dyn MotionProvider + Send + Sync>) -> Self {
        self.motion = motion;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn store(&self) -> &TrackletStore {
        &self.store
    }

    pub fn frames(&self) -> &[FrameOutput] {
        &self.frames
    }

    /// Processes the next frame and returns its kept boxes.
    pub fn step(&mut self, frame: &FrameRecord) -> Result<&FrameOutput> {
        if let Some(last) = self.last_frame {
            if frame.frame <= last {
                return invalid(format!(
                    "frame {} arrived after frame {last}; frames must be strictly increasing",
                    frame.frame
                ));
            }
        }
        self.check_candidates(frame)?;

        let out = match self.config.mode {
            Mode::Integrated => self.step_integrated(frame)?,
            Mode::Sequential => self.step_sequential(frame)?,
        };
        self.store
            .age_and_retire(frame.frame, self.config.max_inactive);
        self.last_frame = Some(frame.frame);
        self.frames.push(out);
        Ok(self.frames.last().expect("just pushed"))
    }

    pub fn finish(self) -> TrackingOutput {
        TrackingOutput {
            tracklets: self.store.into_all(),
            frames: self.frames,
        }
    }

    fn check_candidates(&mut self, frame: &FrameRecord) -> Result<()> {
        let want = self.config.fusion.num_classes + 1;
        for (i, c) in frame.candidates.iter().enumerate() {
            if c.scores.len() != want {
                return invalid(format!(
                    "frame {} candidate {i}: {} class scores, expected {want}",
                    frame.frame,
                    c.scores.len()
                ));
            }
            let dim = *self.embedding_dim.get_or_insert(c.embedding.dim());
            if c.embedding.dim() != dim {
                return invalid(format!(
                    "frame {} candidate {i}: embedding dimension {} != {dim}",
                    frame.frame,
                    c.embedding.dim()
                ));
            }
        }
        Ok(())
    }

    fn step_integrated(&mut self, frame: &FrameRecord) -> Result<FrameOutput> {
        let params = self.config.fusion;
        let active = self.store.active();
        let embs: Vec<&Embedding> = active.iter().map(|t| t.embedding()).collect();
        let dists: Vec<&ClassDistribution> = active.iter().map(|t| t.p_tr()).collect();
        let fgs: Vec<f64> = dists.iter().map(|d| foreground_probability(d)).collect();
        let proposal_min_fg = self.config.proposal_min_fg;

        // Tracklet state is frozen at frame t-1 for every candidate.
        let scored: Vec<Option<ClassDistribution>> = frame
            .candidates
            .par_iter()
            .map(|c| {
                let w = association_weights(&c.embedding, &embs, &params)?;
                if let Some(min_fg) = proposal_min_fg {
                    let det_fg = foreground_probability(&c.scores).min(1.0);
                    if conditioned_foreground(det_fg, &fgs, &w, &params)? < min_fg {
                        return Ok(None);
                    }
                }
                conditioned_score(&c.scores, &dists, &w, &params).map(Some)
            })
            .collect::<Result<_>>()?;

        let cands: Vec<(usize, ClassDistribution)> = scored
            .into_iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|s| (i, s)))
            .collect();
        let boxes: Vec<BBox> = cands
            .iter()
            .map(|(i, _)| frame.candidates[*i].bbox)
            .collect();
        let nms_scores: Vec<f64> = cands.iter().map(|(_, s)| s.top_foreground().1).collect();
        let kept = nms(&boxes, &nms_scores, params.nms_iou)?;

        let kept_dets: Vec<KeptBox<'_>> = kept
            .iter()
            .map(|&k| {
                let (i, s) = &cands[k];
                KeptBox {
                    det: &frame.candidates[*i],
                    score: s.clone(),
                    source: BoxSource::Candidate(*i),
                    detected: true,
                }
            })
            .collect();
        self.associate_and_update(frame.frame, kept_dets)
    }

    fn step_sequential(&mut self, frame: &FrameRecord) -> Result<FrameOutput> {
        let params = self.config.fusion;
        let mut pool: Vec<(Detection, BoxSource)> = frame
            .candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), BoxSource::Candidate(i)))
            .collect();
        if self.config.propagate_boxes {
            let propagated = propagate_box(self.store.active(), self.motion.as_ref(), frame)?;
            pool.extend(
                propagated
                    .into_iter()
                    .map(|(id, d)| (d, BoxSource::Propagated(id))),
            );
        }

        let boxes: Vec<BBox> = pool.iter().map(|(d, _)| d.bbox).collect();
        let nms_scores: Vec<f64> = pool
            .iter()
            .map(|(d, _)| d.scores.top_foreground().1)
            .collect();
        let kept = nms(&boxes, &nms_scores, params.nms_iou)?;

        // A propagated box that suppressed a detector candidate is confirmed
        // by the detector at this frame.
        let mut is_kept = vec![false; pool.len()];
        kept.iter().for_each(|&k| is_kept[k] = true);
        let kept_dets: Vec<KeptBox<'_>> = kept
            .iter()
            .map(|&k| {
                let (det, source) = &pool[k];
                let detected = match source {
                    BoxSource::Candidate(_) => true,
                    BoxSource::Propagated(_) => pool.iter().enumerate().any(|(j, (d, s))| {
                        matches!(s, BoxSource::Candidate(_))
                            && !is_kept[j]
                            && iou(&d.bbox, &det.bbox) >= params.nms_iou
                    }),
                };
                KeptBox {
                    det,
                    score: det.scores.clone(),
                    source: *source,
                    detected,
                }
            })
            .collect();
        let mut out = self.associate_and_update(frame.frame, kept_dets)?;

        if self.config.rescore_boxes {
            for b in &mut out.boxes {
                if let Some(t) = b.track_id.and_then(|id| self.store.get(id)) {
                    b.score = rescore_box(t);
                }
            }
        }
        Ok(out)
    }

    /// Associates kept boxes to the active tracklets, appends matches,
    /// and starts tracklets for confident unmatched detector boxes.
    fn associate_and_update(&mut self, frame: u64, kept: Vec<KeptBox<'_>>) -> Result<FrameOutput> {
        let params = self.config.fusion;
        let result = {
            let tracks: Vec<TrackNode<'_>> =
                self.store.active().iter().map(TrackNode::from).collect();
            let dets: Vec<DetNode<'_>> = kept
                .iter()
                .map(|k| DetNode {
                    bbox: &k.det.bbox,
                    embedding: &k.det.embedding,
                })
                .collect();
            solve(&build_graph(&tracks, &dets, params.edge_min_iou)?)
        };

        let spawn_fg = self.config.spawn_threshold();
        let mut boxes = Vec::with_capacity(kept.len());
        for (i, k) in kept.into_iter().enumerate() {
            let KeptBox {
                det,
                score,
                source,
                detected,
            } = k;
            let track_id = match result.matched_track(i) {
                Some(id) => {
                    let t = self
                        .store
                        .active_mut(id)
                        .expect("matched tracklet is active");
                    let propagated = matches!(source, BoxSource::Propagated(_));
                    t.push(
                        frame,
                        det.bbox,
                        score.clone(),
                        &det.embedding,
                        &params,
                        propagated,
                        detected,
                    )?;
                    Some(id)
                }
                // Propagated boxes only ever extend their own tracklets.
                None if matches!(source, BoxSource::Propagated(_)) => continue,
                None if foreground_probability(&score) > spawn_fg => Some(
                    self.store
                        .init_tracklet(frame, det.bbox, score.clone(), det.embedding.clone()),
                ),
                None => None,
            };
            boxes.push(OutputBox {
                bbox: det.bbox,
                score,
                track_id,
                source,
            });
        }
        Ok(FrameOutput { frame, boxes })
    }
}

/// Runs tracklet-conditioned detection and tracking over a whole sequence.
pub fn run_integrated(frames: &[FrameRecord], config: &PipelineConfig) -> Result<TrackingOutput> {
    if config.mode != Mode::Integrated {
        return Err(Error::InvalidConfig(
            "run_integrated needs mode = integrated".into(),
        ));
    }
    run(frames, config)
}

/// Runs the sequential detect-then-track baseline over a whole sequence.
pub fn run_sequential(frames: &[FrameRecord], config: &PipelineConfig) -> Result<TrackingOutput> {
    if config.mode != Mode::Sequential {
        return Err(Error::InvalidConfig(
            "run_sequential needs mode = sequential".into(),
        ));
    }
    run(frames, config)
}

/// Dispatches on `config.mode`.
pub fn run(frames: &[FrameRecord], config: &PipelineConfig) -> Result<TrackingOutput> {
    let mut tracker = Tracker::new(config.clone())?;
    for f in frames {
        tracker.step(f)?;
    }
    Ok(tracker.finish())
}
