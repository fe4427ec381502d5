//! Axis-aligned boxes, IoU, and greedy non-maximum suppression.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Axis-aligned rectangle in continuous image coordinates.
///
/// Always satisfies `x1 <= x2`, `y1 <= y2` with finite coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return invalid(format!(
                "box has non-finite coordinate: [{x1}, {y1}, {x2}, {y2}]"
            ));
        }
        if x1 > x2 || y1 > y2 {
            return invalid(format!(
                "box corners out of order: [{x1}, {y1}, {x2}, {y2}]"
            ));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Builds a box from its top-left corner and size.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    /// Builds a box from its center and size; negative sizes clamp to zero.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let (hw, hh) = (w.max(0.0) / 2.0, h.max(0.0) / 2.0);
        Self::new(cx - hw, cy - hh, cx + hw, cy + hh)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Applies a `(dx, dy, dw, dh)` displacement: the center moves by
    /// `(dx, dy)` and the size grows by `(dw, dh)`.
    pub fn displaced(&self, motion: [f64; 4]) -> Result<Self> {
        let [dx, dy, dw, dh] = motion;
        if dw == 0.0 && dh == 0.0 {
            // Keep pure translations exact.
            return Self::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy);
        }
        let (cx, cy) = self.center();
        Self::from_center(cx + dx, cy + dy, self.width() + dw, self.height() + dh)
    }

    /// Displacement that maps `self` onto `to`, the inverse of [`BBox::displaced`].
    pub fn displacement_to(&self, to: &BBox) -> [f64; 4] {
        let (cx0, cy0) = self.center();
        let (cx1, cy1) = to.center();
        [
            cx1 - cx0,
            cy1 - cy0,
            to.width() - self.width(),
            to.height() - self.height(),
        ]
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = crate::Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// Intersection over union. Two zero-area boxes have IoU 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy NMS. Returns kept indices in descending score order; equal scores
/// keep the lower input index first. A box is suppressed when its IoU with
/// an already kept box reaches `iou_threshold`.
pub fn nms(boxes: &[BBox], scores: &[f64], iou_threshold: f64) -> Result<Vec<usize>> {
    if boxes.len() != scores.len() {
        return invalid(format!(
            "nms got {} boxes but {} scores",
            boxes.len(),
            scores.len()
        ));
    }
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return invalid(format!("nms threshold {iou_threshold} not in (0, 1)"));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return invalid(format!("nms score {s} is not finite"));
    }

    let mut order: Vec<usize> = (0..boxes.len()).collect();
    // Stable sort keeps lower indices first among equal scores.
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept
            .iter()
            .all(|&k| iou(&boxes[k], &boxes[i]) < iou_threshold)
        {
            kept.push(i);
        }
    }
    Ok(kept)
}
