//! Tracklet state, its class/embedding update rules, and lifecycle.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::BBox;
use crate::scoring::{ClassDistribution, Embedding, FusionParams};

pub type TrackId = u64;

/// One box of a tracklet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub frame: u64,
    pub bbox: BBox,
    /// Score the box carried when it was associated (conditioned score in
    /// integrated mode, raw detector score in sequential mode).
    pub score: ClassDistribution,
    /// Set for boxes produced by propagation rather than the detector.
    #[serde(default)]
    pub propagated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracklet {
    id: TrackId,
    entries: Vec<TrackEntry>,
    p_tr: ClassDistribution,
    embedding: Embedding,
    /// Frames since the last detector box; propagated boxes do not count.
    inactive_frames: u32,
    last_detected_frame: u64,
}

impl Tracklet {
    fn new(id: TrackId, frame: u64, bbox: BBox, score: ClassDistribution, emb: Embedding) -> Self {
        Self {
            id,
            entries: vec![TrackEntry {
                frame,
                bbox,
                score: score.clone(),
                propagated: false,
            }],
            p_tr: score,
            embedding: emb,
            inactive_frames: 0,
            last_detected_frame: frame,
        }
    }

    pub fn id(&self) -> TrackId {
        self.id
    }

    pub fn entries(&self) -> &[TrackEntry] {
        &self.entries
    }

    /// Running class distribution.
    pub fn p_tr(&self) -> &ClassDistribution {
        &self.p_tr
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> &TrackEntry {
        self.entries.last().expect("tracklets are never empty")
    }

    pub fn last_box(&self) -> &BBox {
        &self.last().bbox
    }

    pub fn last_active_frame(&self) -> u64 {
        self.last().frame
    }

    pub fn inactive_frames(&self) -> u32 {
        self.inactive_frames
    }

    /// Frame of the newest box that came from the detector.
    pub fn last_detected_frame(&self) -> u64 {
        self.last_detected_frame
    }

    /// Appends an associated box, folding its score into the running class
    /// distribution and its embedding into the EMA.
    pub fn append(
        &mut self,
        frame: u64,
        bbox: BBox,
        score: ClassDistribution,
        box_emb: &Embedding,
        params: &FusionParams,
    ) -> Result<()> {
        self.push(frame, bbox, score, box_emb, params, false, true)
    }

    /// `detected` marks a box backed by the detector at this frame; only
    /// such boxes reset the inactivity counter.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn push(
        &mut self,
        frame: u64,
        bbox: BBox,
        score: ClassDistribution,
        box_emb: &Embedding,
        params: &FusionParams,
        propagated: bool,
        detected: bool,
    ) -> Result<()> {
        if frame <= self.last_active_frame() {
            return invalid(format!(
                "tracklet {} already has frame {}, cannot append frame {frame}",
                self.id,
                self.last_active_frame()
            ));
        }
        let p_tr = rescore(&self.p_tr, self.len(), &score, params.beta)?;
        let embedding = update_embedding(&self.embedding, box_emb, params.eta)?;
        self.p_tr = p_tr;
        self.embedding = embedding;
        self.entries.push(TrackEntry {
            frame,
            bbox,
            score,
            propagated,
        });
        if detected {
            self.inactive_frames = 0;
            self.last_detected_frame = frame;
        }
        Ok(())
    }

    /// Unweighted mean of the scores of every box in the tracklet.
    pub fn mean_score(&self) -> ClassDistribution {
        let n = self.entries.len() as f64;
        let mut acc = vec![0.0; self.p_tr.len()];
        for e in &self.entries {
            for (a, p) in acc.iter_mut().zip(e.score.probs()) {
                *a += p;
            }
        }
        ClassDistribution::from_weights(acc.into_iter().map(|a| a / n).collect())
            .expect("mean of valid distributions is valid")
    }
}

/// EMA embedding update, renormalized to unit length.
pub fn update_embedding(current: &Embedding, box_emb: &Embedding, eta: f64) -> Result<Embedding> {
    if current.dim() != box_emb.dim() {
        return invalid(format!(
            "embedding dimension mismatch: {} vs {}",
            current.dim(),
            box_emb.dim()
        ));
    }
    if !(0.0..=1.0).contains(&eta) {
        return invalid(format!("eta must be in [0, 1], got {eta}"));
    }
    if eta == 1.0 {
        return Ok(box_emb.clone());
    }
    let mixed: Vec<f64> = box_emb
        .values()
        .iter()
        .zip(current.values())
        .map(|(b, t)| eta * b + (1.0 - eta) * t)
        .collect();
    if mixed.iter().all(|v| v.abs() < 1e-15) {
        return Err(Error::DegenerateEmbedding);
    }
    Embedding::new(mixed)
}

/// Running-average class update. The newest box has weight 1 and the
/// previous distribution weight `beta * len_prev`.
pub fn rescore(
    p_tr_prev: &ClassDistribution,
    len_prev: usize,
    fused_box: &ClassDistribution,
    beta: f64,
) -> Result<ClassDistribution> {
    if p_tr_prev.len() != fused_box.len() {
        return invalid(format!(
            "class count mismatch: {} vs {}",
            p_tr_prev.len(),
            fused_box.len()
        ));
    }
    if len_prev == 0 {
        return invalid("previous tracklet length must be >= 1");
    }
    if !(0.0..=1.0).contains(&beta) {
        return invalid(format!("beta must be in [0, 1], got {beta}"));
    }
    let k = beta * len_prev as f64;
    let denom = 1.0 + k;
    let out: Vec<f64> = fused_box
        .probs()
        .iter()
        .zip(p_tr_prev.probs())
        .map(|(f, p)| (f + k * p) / denom)
        .collect();
    let sum: f64 = out.iter().sum();
    debug_assert!((sum - 1.0).abs() < 1e-9, "rescore lost mass: {sum}");
    ClassDistribution::from_weights(out)
}

/// Active and terminated tracklets of one sequence.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrackletStore {
    active: Vec<Tracklet>,
    terminated: Vec<Tracklet>,
    next_id: TrackId,
}

impl TrackletStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts a tracklet of length 1 with a fresh id.
    pub fn init_tracklet(
        &mut self,
        frame: u64,
        bbox: BBox,
        score: ClassDistribution,
        emb: Embedding,
    ) -> TrackId {
        let id = self.next_id;
        self.next_id += 1;
        self.active.push(Tracklet::new(id, frame, bbox, score, emb));
        id
    }

    pub fn active(&self) -> &[Tracklet] {
        &self.active
    }

    pub fn terminated(&self) -> &[Tracklet] {
        &self.terminated
    }

    pub fn next_id(&self) -> TrackId {
        self.next_id
    }

    pub fn get(&self, id: TrackId) -> Option<&Tracklet> {
        self.active
            .iter()
            .chain(&self.terminated)
            .find(|t| t.id == id)
    }

    pub fn active_mut(&mut self, id: TrackId) -> Option<&mut Tracklet> {
        self.active.iter_mut().find(|t| t.id == id)
    }

    /// Ages every active tracklet without a detector box at `frame`; those
    /// inactive for more than `max_inactive` frames are terminated, so a
    /// tracklet extended only by propagation ends too. Returns the ids
    /// terminated by this call.
    pub fn age_and_retire(&mut self, frame: u64, max_inactive: u32) -> Vec<TrackId> {
        let mut retired = Vec::new();
        let mut keep = Vec::with_capacity(self.active.len());
        for mut t in self.active.drain(..) {
            if t.last_detected_frame < frame {
                t.inactive_frames += 1;
            }
            if t.inactive_frames > max_inactive {
                retired.push(t.id);
                self.terminated.push(t);
            } else {
                keep.push(t);
            }
        }
        self.active = keep;
        retired
    }

    /// All tracklets ordered by id.
    pub fn into_all(self) -> Vec<Tracklet> {
        let mut all = self.active;
        all.extend(self.terminated);
        all.sort_by_key(|t| t.id);
        all
    }
}
