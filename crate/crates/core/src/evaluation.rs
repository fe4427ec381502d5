//! Detection and tracking mAP, motion-split breakdown, and tracklet
//! stability errors.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::pipeline::{FrameRecord, TrackRow};
use crate::simulator::{motion_speed_of, MotionSpeed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub box_iou_threshold: f64,
    pub temporal_thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            box_iou_threshold: 0.5,
            temporal_thresholds: vec![0.25, 0.5, 0.75],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |t: f64| t > 0.0 && t <= 1.0;
        if !ok(self.box_iou_threshold) {
            return Err(Error::InvalidConfig(format!(
                "box_iou_threshold must be in (0, 1], got {}",
                self.box_iou_threshold
            )));
        }
        if self.temporal_thresholds.is_empty() {
            return Err(Error::InvalidConfig("temporal_thresholds is empty".into()));
        }
        if let Some(t) = self.temporal_thresholds.iter().find(|t| !ok(**t)) {
            return Err(Error::InvalidConfig(format!(
                "temporal threshold must be in (0, 1], got {t}"
            )));
        }
        Ok(())
    }
}

/// One scored box on one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameBox {
    pub frame: u64,
    pub bbox: BBox,
    pub class: usize,
    pub score: f64,
}

/// A predicted or ground-truth tracklet. Boxes are sorted by frame with at
/// most one box per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSeq {
    pub id: u64,
    pub class: usize,
    pub confidence: f64,
    pub boxes: Vec<(u64, BBox)>,
}

impl TrackSeq {
    fn box_at(&self, frame: u64) -> Option<&BBox> {
        self.boxes
            .binary_search_by_key(&frame, |(f, _)| *f)
            .ok()
            .map(|i| &self.boxes[i].1)
    }
}

pub fn frame_boxes(rows: &[TrackRow]) -> Vec<FrameBox> {
    rows.iter()
        .map(|r| FrameBox {
            frame: r.frame,
            bbox: r.bbox,
            class: r.class,
            score: r.confidence,
        })
        .collect()
}

/// Groups tracked rows by id. Class is the most frequent row class (lower
/// class on ties); confidence is the mean row confidence.
pub fn pred_tracklets(rows: &[TrackRow]) -> Result<Vec<TrackSeq>> {
    let mut by_id: BTreeMap<u64, Vec<&TrackRow>> = BTreeMap::new();
    for r in rows {
        if let Some(id) = r.track_id {
            by_id.entry(id).or_default().push(r);
        }
    }
    by_id
        .into_iter()
        .map(|(id, mut rs)| {
            rs.sort_by_key(|r| r.frame);
            if rs.windows(2).any(|w| w[0].frame == w[1].frame) {
                return Err(Error::InvalidInput(format!(
                    "track {id} has two boxes on one frame"
                )));
            }
            let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
            for r in &rs {
                *votes.entry(r.class).or_default() += 1;
            }
            let top = votes.values().copied().max().unwrap_or(0);
            let class = votes
                .iter()
                .find(|(_, n)| **n == top)
                .map(|(c, _)| *c)
                .unwrap_or(0);
            let confidence = rs.iter().map(|r| r.confidence).sum::<f64>() / rs.len() as f64;
            Ok(TrackSeq {
                id,
                class,
                confidence,
                boxes: rs.iter().map(|r| (r.frame, r.bbox)).collect(),
            })
        })
        .collect()
}

/// Ground-truth tracklets from annotated frames.
pub fn gt_tracklets(frames: &[FrameRecord]) -> Result<Vec<TrackSeq>> {
    let mut by_id: BTreeMap<u64, TrackSeq> = BTreeMap::new();
    for f in frames {
        for g in f.ground_truth.iter().flatten() {
            let t = by_id.entry(g.track_id).or_insert_with(|| TrackSeq {
                id: g.track_id,
                class: g.class,
                confidence: 1.0,
                boxes: Vec::new(),
            });
            if t.class != g.class {
                return Err(Error::InvalidInput(format!(
                    "ground-truth track {} changes class",
                    g.track_id
                )));
            }
            if t.boxes.last().is_some_and(|(fr, _)| *fr >= f.frame) {
                return Err(Error::InvalidInput(format!(
                    "ground-truth track {} is not ordered by frame",
                    g.track_id
                )));
            }
            t.boxes.push((f.frame, g.bbox));
        }
    }
    Ok(by_id.into_values().collect())
}

pub fn gt_frame_boxes(gt: &[TrackSeq]) -> Vec<FrameBox> {
    gt.iter()
        .flat_map(|t| {
            t.boxes.iter().map(move |(f, b)| FrameBox {
                frame: *f,
                bbox: *b,
                class: t.class,
                score: 1.0,
            })
        })
        .collect()
}

/// All-point interpolated average precision for a ranked TP/FP list.
pub fn average_precision(tp: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut prec = Vec::with_capacity(tp.len());
    let mut rec = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, &t) in tp.iter().enumerate() {
        if t {
            hits += 1;
        }
        prec.push(hits as f64 / (i + 1) as f64);
        rec.push(hits as f64 / num_gt as f64);
    }
    for i in (0..prec.len().saturating_sub(1)).rev() {
        prec[i] = prec[i].max(prec[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for (p, r) in prec.iter().zip(&rec) {
        if *r > prev_r {
            ap += (r - prev_r) * p;
            prev_r = *r;
        }
    }
    ap
}

/// Indices of `scores` sorted by descending score, stable.
fn ranked(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let s: Vec<f64> = scores.collect();
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApReport {
    pub per_class: BTreeMap<usize, f64>,
    pub mean: f64,
}

/// Detection mAP at the configured box IoU threshold.
pub fn map_det(preds: &[FrameBox], gt: &[FrameBox], config: &EvalConfig) -> Result<ApReport> {
    config.validate()?;
    if gt.is_empty() {
        return Err(Error::UndefinedMetric("no ground-truth boxes".into()));
    }
    let mut classes: BTreeMap<usize, (Vec<&FrameBox>, Vec<&FrameBox>)> = BTreeMap::new();
    for g in gt {
        classes.entry(g.class).or_default().1.push(g);
    }
    for p in preds {
        if let Some(e) = classes.get_mut(&p.class) {
            e.0.push(p);
        }
    }
    let per_class: BTreeMap<usize, f64> = classes
        .into_par_iter()
        .map(|(c, (ps, gs))| {
            let mut gt_by_frame: HashMap<u64, Vec<usize>> = HashMap::new();
            for (i, g) in gs.iter().enumerate() {
                gt_by_frame.entry(g.frame).or_default().push(i);
            }
            let mut used = vec![false; gs.len()];
            let tp: Vec<bool> = ranked(ps.iter().map(|p| p.score))
                .into_iter()
                .map(|i| {
                    let p = ps[i];
                    let best = gt_by_frame
                        .get(&p.frame)
                        .into_iter()
                        .flatten()
                        .filter(|&&g| !used[g])
                        .map(|&g| (g, iou(&p.bbox, &gs[g].bbox)))
                        .filter(|(_, o)| *o >= config.box_iou_threshold)
                        .fold(None::<(usize, f64)>, |acc, x| match acc {
                            Some(a) if a.1 >= x.1 => Some(a),
                            _ => Some(x),
                        });
                    match best {
                        Some((g, _)) => {
                            used[g] = true;
                            true
                        }
                        None => false,
                    }
                })
                .collect();
            (c, average_precision(&tp, gs.len()))
        })
        .collect();
    let mean = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok(ApReport { per_class, mean })
}

/// Matched frames over frames where either tracklet has a box. A frame
/// matches when both boxes exist and overlap by at least the threshold.
pub fn temporal_iou(a: &TrackSeq, b: &TrackSeq, box_iou_threshold: f64) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut matched, mut union) = (0usize, 0usize);
    while i < a.boxes.len() || j < b.boxes.len() {
        union += 1;
        match (a.boxes.get(i), b.boxes.get(j)) {
            (Some((fa, ba)), Some((fb, bb))) if fa == fb => {
                if iou(ba, bb) >= box_iou_threshold {
                    matched += 1;
                }
                i += 1;
                j += 1;
            }
            (Some((fa, _)), Some((fb, _))) if fa < fb => i += 1,
            (Some(_), None) => i += 1,
            _ => j += 1,
        }
    }
    if union == 0 {
        0.0
    } else {
        matched as f64 / union as f64
    }
}

fn tiou_matrix(preds: &[TrackSeq], gt: &[TrackSeq], thr: f64) -> Vec<Vec<f64>> {
    preds
        .par_iter()
        .map(|p| gt.iter().map(|g| temporal_iou(p, g, thr)).collect())
        .collect()
}

/// AP at one temporal threshold, per class over the given GT subset.
/// `pred_mask` removes predictions from consideration.
fn track_ap_at(
    preds: &[TrackSeq],
    gt: &[TrackSeq],
    tiou: &[Vec<f64>],
    tau: f64,
    gt_mask: &[bool],
    pred_mask: &[bool],
) -> BTreeMap<usize, f64> {
    let mut classes: BTreeMap<usize, usize> = BTreeMap::new();
    for (g, &keep) in gt.iter().zip(gt_mask) {
        if keep {
            *classes.entry(g.class).or_default() += 1;
        }
    }
    classes
        .into_iter()
        .map(|(c, num_gt)| {
            let order = ranked(preds.iter().map(|p| p.confidence));
            let mut used = vec![false; gt.len()];
            let tp: Vec<bool> = order
                .into_iter()
                .filter(|&i| pred_mask[i] && preds[i].class == c)
                .map(|i| {
                    let mut best: Option<(usize, f64)> = None;
                    for (g, gt_t) in gt.iter().enumerate() {
                        if !gt_mask[g] || used[g] || gt_t.class != c || tiou[i][g] < tau {
                            continue;
                        }
                        if best.is_none_or(|b| tiou[i][g] > b.1) {
                            best = Some((g, tiou[i][g]));
                        }
                    }
                    match best {
                        Some((g, _)) => {
                            used[g] = true;
                            true
                        }
                        None => false,
                    }
                })
                .collect();
            (c, average_precision(&tp, num_gt))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackMapReport {
    /// `(tau, mean AP over classes)`.
    pub per_threshold: Vec<(f64, f64)>,
    pub mean: f64,
}

fn track_map_masked(
    preds: &[TrackSeq],
    gt: &[TrackSeq],
    tiou: &[Vec<f64>],
    config: &EvalConfig,
    gt_mask: &[bool],
    pred_mask: &[bool],
) -> Option<TrackMapReport> {
    if !gt_mask.iter().any(|m| *m) {
        return None;
    }
    let per_threshold: Vec<(f64, f64)> = config
        .temporal_thresholds
        .iter()
        .map(|&tau| {
            let aps = track_ap_at(preds, gt, tiou, tau, gt_mask, pred_mask);
            (tau, aps.values().sum::<f64>() / aps.len() as f64)
        })
        .collect();
    let mean = per_threshold.iter().map(|(_, v)| v).sum::<f64>() / per_threshold.len() as f64;
    Some(TrackMapReport {
        per_threshold,
        mean,
    })
}

/// Tracking mAP averaged over temporal thresholds and classes.
pub fn map_track(
    preds: &[TrackSeq],
    gt: &[TrackSeq],
    config: &EvalConfig,
) -> Result<TrackMapReport> {
    config.validate()?;
    if gt.is_empty() {
        return Err(Error::UndefinedMetric("no ground-truth tracklets".into()));
    }
    let tiou = tiou_matrix(preds, gt, config.box_iou_threshold);
    Ok(track_map_masked(
        preds,
        gt,
        &tiou,
        config,
        &vec![true; gt.len()],
        &vec![true; preds.len()],
    )
    .expect("gt is non-empty"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub fragment_error: f64,
    pub center_error: f64,
    pub aspect_error: f64,
}

/// Errors of one best-match tracklet against its ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchErrors {
    pub fragment: f64,
    /// `None` when the prediction matches no frame.
    pub center: Option<f64>,
    pub aspect: Option<f64>,
}

fn population_std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Fragment, center and aspect errors of `pred` as the best match of `gt`.
pub fn match_errors(pred: &TrackSeq, gt: &TrackSeq, box_iou_threshold: f64) -> MatchErrors {
    let mut covered = Vec::with_capacity(gt.boxes.len());
    let (mut ex, mut ey, mut er, mut es) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (f, g) in &gt.boxes {
        let hit = pred.box_at(*f).filter(|p| iou(p, g) >= box_iou_threshold);
        covered.push(hit.is_some());
        if let Some(p) = hit {
            let (pcx, pcy) = p.center();
            let (gcx, gcy) = g.center();
            ex.push((pcx - gcx) / g.width());
            ey.push((pcy - gcy) / g.height());
            er.push((p.width() / p.height()) / (g.width() / g.height()) - 1.0);
            es.push((p.area() / g.area()).sqrt() - 1.0);
        }
    }
    let transitions = covered.windows(2).filter(|w| w[0] != w[1]).count();
    let fragment = if covered.len() > 1 {
        transitions as f64 / (covered.len() - 1) as f64
    } else {
        0.0
    };
    let spatial = !ex.is_empty();
    MatchErrors {
        fragment,
        center: spatial.then(|| population_std(&ex) + population_std(&ey)),
        aspect: spatial.then(|| population_std(&er) + population_std(&es)),
    }
}

/// Per-GT errors for every temporal threshold: `result[k][g]` is `None`
/// when GT `g` has no best match at threshold `k`.
fn per_gt_errors(
    preds: &[TrackSeq],
    gt: &[TrackSeq],
    tiou: &[Vec<f64>],
    config: &EvalConfig,
) -> Vec<Vec<Option<MatchErrors>>> {
    config
        .temporal_thresholds
        .iter()
        .map(|&tau| {
            // Highest-confidence positive assigned to each GT.
            let mut best: Vec<Option<usize>> = vec![None; gt.len()];
            for (i, p) in preds.iter().enumerate() {
                let mut target: Option<(usize, f64)> = None;
                for (g, gt_t) in gt.iter().enumerate() {
                    if gt_t.class != p.class {
                        continue;
                    }
                    if target.is_none_or(|t| tiou[i][g] > t.1) {
                        target = Some((g, tiou[i][g]));
                    }
                }
                if let Some((g, v)) = target {
                    if v >= tau && v > 0.0 {
                        let replace = best[g].is_none_or(|b| p.confidence > preds[b].confidence);
                        if replace {
                            best[g] = Some(i);
                        }
                    }
                }
            }
            best.iter()
                .enumerate()
                .map(|(g, b)| b.map(|i| match_errors(&preds[i], &gt[g], config.box_iou_threshold)))
                .collect()
        })
        .collect()
}

fn aggregate(errors: &[Vec<Option<MatchErrors>>], gt_mask: &[bool]) -> Option<StabilityReport> {
    if !gt_mask.iter().any(|m| *m) {
        return None;
    }
    let mut frag = Vec::new();
    let mut center = Vec::new();
    let mut aspect = Vec::new();
    for per_gt in errors {
        let mut f = Vec::new();
        let (mut c, mut a) = (Vec::new(), Vec::new());
        for (e, _) in per_gt.iter().zip(gt_mask).filter(|(_, m)| **m) {
            match e {
                Some(e) => {
                    f.push(e.fragment);
                    c.extend(e.center);
                    a.extend(e.aspect);
                }
                None => f.push(1.0),
            }
        }
        frag.push(mean(&f));
        if !c.is_empty() {
            center.push(mean(&c));
            aspect.push(mean(&a));
        }
    }
    Some(StabilityReport {
        fragment_error: mean(&frag),
        center_error: mean(&center),
        aspect_error: mean(&aspect),
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Stability errors averaged over GT tracklets and temporal thresholds.
/// A GT tracklet without a best match counts as fragment error 1 and is
/// left out of the spatial errors.
pub fn stability(
    preds: &[TrackSeq],
    gt: &[TrackSeq],
    config: &EvalConfig,
) -> Result<StabilityReport> {
    config.validate()?;
    if gt.is_empty() {
        return Err(Error::UndefinedMetric("no ground-truth tracklets".into()));
    }
    let tiou = tiou_matrix(preds, gt, config.box_iou_threshold);
    let errors = per_gt_errors(preds, gt, &tiou, config);
    Ok(aggregate(&errors, &vec![true; gt.len()]).expect("gt is non-empty"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitReport {
    pub num_gt: usize,
    pub map_track: Option<f64>,
    pub stability: Option<StabilityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub map_det: f64,
    pub ap_det: BTreeMap<usize, f64>,
    pub map_track: f64,
    pub map_track_per_threshold: Vec<(f64, f64)>,
    pub stability: StabilityReport,
    pub splits: BTreeMap<MotionSpeed, SplitReport>,
}

/// Full metric report. Predicted tracklets whose best temporal-IoU ground
/// truth falls in another motion split are ignored for that split.
pub fn evaluate(rows: &[TrackRow], gt: &[TrackSeq], config: &EvalConfig) -> Result<EvalReport> {
    config.validate()?;
    if gt.is_empty() {
        return Err(Error::UndefinedMetric("no ground-truth tracklets".into()));
    }
    let det = map_det(&frame_boxes(rows), &gt_frame_boxes(gt), config)?;
    let preds = pred_tracklets(rows)?;
    let tiou = tiou_matrix(&preds, gt, config.box_iou_threshold);
    let all_gt = vec![true; gt.len()];
    let track = track_map_masked(&preds, gt, &tiou, config, &all_gt, &vec![true; preds.len()])
        .expect("gt is non-empty");
    let errors = per_gt_errors(&preds, gt, &tiou, config);
    let stab = aggregate(&errors, &all_gt).expect("gt is non-empty");

    // Tracks too short to classify are left out of every split.
    let speeds: Vec<Option<MotionSpeed>> =
        gt.iter().map(|g| motion_speed_of(&g.boxes).ok()).collect();
    let best_gt: Vec<Option<usize>> = tiou
        .iter()
        .map(|row| {
            let mut best: Option<(usize, f64)> = None;
            for (g, &v) in row.iter().enumerate() {
                if v > 0.0 && best.is_none_or(|b| v > b.1) {
                    best = Some((g, v));
                }
            }
            best.map(|b| b.0)
        })
        .collect();

    let mut splits = BTreeMap::new();
    for s in MotionSpeed::ALL {
        let gt_mask: Vec<bool> = speeds.iter().map(|x| *x == Some(s)).collect();
        let pred_mask: Vec<bool> = best_gt
            .iter()
            .map(|b| b.is_none_or(|g| gt_mask[g]))
            .collect();
        splits.insert(
            s,
            SplitReport {
                num_gt: gt_mask.iter().filter(|m| **m).count(),
                map_track: track_map_masked(&preds, gt, &tiou, config, &gt_mask, &pred_mask)
                    .map(|r| r.mean),
                stability: aggregate(&errors, &gt_mask),
            },
        );
    }

    Ok(EvalReport {
        map_det: det.mean,
        ap_det: det.per_class,
        map_track: track.mean,
        map_track_per_threshold: track.per_threshold,
        stability: stab,
        splits,
    })
}

impl EvalReport {
    /// `key=value` lines, one metric per line.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: String, v: f64| out.push_str(&format!("{k}={v:.6}\n"));
        kv("map_det".into(), self.map_det);
        kv("map_track".into(), self.map_track);
        for (tau, v) in &self.map_track_per_threshold {
            kv(format!("map_track@{tau}"), *v);
        }
        kv("fragment_error".into(), self.stability.fragment_error);
        kv("center_error".into(), self.stability.center_error);
        kv("aspect_error".into(), self.stability.aspect_error);
        for (s, r) in &self.splits {
            if let Some(m) = r.map_track {
                kv(format!("map_track.{}", s.name()), m);
            }
            if let Some(st) = r.stability {
                kv(format!("fragment_error.{}", s.name()), st.fragment_error);
                kv(format!("center_error.{}", s.name()), st.center_error);
                kv(format!("aspect_error.{}", s.name()), st.aspect_error);
            }
        }
        for (c, ap) in &self.ap_det {
            kv(format!("ap_det.class{c}"), *ap);
        }
        out
    }

    /// Two small tables: accuracy by motion split and stability errors.
    pub fn summary_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1}", 100.0 * x));
        let split = |s: MotionSpeed| self.splits.get(&s);
        let mut out = String::new();
        out.push_str("mAP^det  mAP^track  slow   medium fast\n");
        out.push_str(&format!(
            "{:<8} {:<10} {:<6} {:<6} {:<6}\n",
            fmt(Some(self.map_det)),
            fmt(Some(self.map_track)),
            fmt(split(MotionSpeed::Slow).and_then(|r| r.map_track)),
            fmt(split(MotionSpeed::Medium).and_then(|r| r.map_track)),
            fmt(split(MotionSpeed::Fast).and_then(|r| r.map_track)),
        ));
        out.push_str("split    fragment center aspect\n");
        let mut row = |name: &str, s: Option<StabilityReport>| {
            if let Some(s) = s {
                out.push_str(&format!(
                    "{:<8} {:<8.4} {:<6.4} {:<6.4}\n",
                    name, s.fragment_error, s.center_error, s.aspect_error
                ));
            }
        };
        row("all", Some(self.stability));
        for s in MotionSpeed::ALL {
            row(s.name(), split(s).and_then(|r| r.stability));
        }
        out
    }
}
