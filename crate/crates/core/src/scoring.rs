//! Tracklet-conditioned probability math.
//!
//! A candidate box's class distribution is a mixture over tracklets
//! `j = 0..=m` of the detector distribution fused with each tracklet's
//! running class distribution, weighted by appearance affinity. Index 0 is
//! the null tracklet: constant log-weight `r_null`, uniform class prior.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance on the sum of a [`ClassDistribution`].
pub const DIST_SUM_TOL: f64 = 1e-9;

/// Lower bound applied to each factor of the detector/tracklet product.
pub const FUSION_FLOOR: f64 = 1e-12;

/// Probability over `C + 1` classes, index 0 being background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    /// Validates an already normalized distribution.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return invalid(format!(
                "class distribution needs at least 2 entries, got {}",
                probs.len()
            ));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return invalid(format!("class probability {p} outside [0, 1]"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DIST_SUM_TOL {
            return invalid(format!("class probabilities sum to {sum}, not 1"));
        }
        Ok(Self(probs))
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return invalid("class weights must be finite and nonnegative");
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::DegenerateFusion);
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    /// Softmax over logits.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return invalid("logits must be finite");
        }
        Self::from_weights(logits.iter().map(|l| (l - max).exp()).collect())
    }

    /// The null-tracklet prior `1 / (C + 1)`.
    pub fn uniform(num_classes: usize) -> Self {
        let n = num_classes + 1;
        Self(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of foreground classes `C`.
    pub fn num_classes(&self) -> usize {
        self.0.len() - 1
    }

    pub fn background(&self) -> f64 {
        self.0[0]
    }

    /// Most likely foreground class (1-based) and its probability. Ties go
    /// to the lower class index.
    pub fn top_foreground(&self) -> (usize, f64) {
        let mut best = (1, self.0[1]);
        for (c, &p) in self.0.iter().enumerate().skip(2) {
            if p > best.1 {
                best = (c, p);
            }
        }
        best
    }
}

impl TryFrom<Vec<f64>> for ClassDistribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ClassDistribution> for Vec<f64> {
    fn from(d: ClassDistribution) -> Self {
        d.0
    }
}

/// Unit-norm appearance embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `values` to unit length. Vectors already within 1e-10 of
    /// unit norm are kept bit-for-bit so serialized embeddings round-trip.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("embedding must have at least one dimension");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("embedding has a non-finite entry");
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateEmbedding);
        }
        if (norm - 1.0).abs() <= 1e-10 {
            return Ok(Self(values));
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn cosine(&self, other: &Embedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return invalid(format!(
                "embedding dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            ));
        }
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        Ok(dot.clamp(-1.0, 1.0))
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

/// Scalar hyper-parameters of conditioning, rescoring, and association.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    /// Weight of the tracklet log-likelihood against the detector's.
    pub alpha: f64,
    /// Decay of the tracklet class running average.
    pub beta: f64,
    /// Cosine modulation of the association log-weight.
    pub gamma: f64,
    /// EMA weight of a newly associated box embedding.
    pub eta: f64,
    /// Log-weight of the null tracklet.
    pub r_null: f64,
    /// Foreground class count `C`.
    pub num_classes: usize,
    pub nms_iou: f64,
    /// Association edges require IoU strictly above this.
    pub edge_min_iou: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.99,
            gamma: 8.0,
            eta: 0.8,
            r_null: 0.3,
            num_classes: 30,
            nms_iou: 0.3,
            edge_min_iou: 0.0,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta must be in (0, 1], got {}", self.beta));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta must be in (0, 1], got {}", self.eta));
        }
        if !self.r_null.is_finite() {
            return bad(format!("r_null must be finite, got {}", self.r_null));
        }
        if self.num_classes < 1 {
            return bad("num_classes must be >= 1".into());
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return bad(format!("nms_iou must be in (0, 1), got {}", self.nms_iou));
        }
        if !(0.0..1.0).contains(&self.edge_min_iou) {
            return bad(format!(
                "edge_min_iou must be in [0, 1), got {}",
                self.edge_min_iou
            ));
        }
        Ok(())
    }
}

/// Normalized association weights of one box against the null tracklet
/// (index 0) and each tracklet embedding (index `j + 1`).
pub fn association_weights(
    box_emb: &Embedding,
    tracklet_embs: &[&Embedding],
    params: &FusionParams,
) -> Result<Vec<f64>> {
    let mut logits = Vec::with_capacity(tracklet_embs.len() + 1);
    logits.push(params.r_null);
    for e in tracklet_embs {
        logits.push(params.gamma * box_emb.cosine(e)?);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    Ok(w)
}

/// `p_det[c] * p_tr[c]^alpha`, renormalized over classes.
pub fn fuse_scores(
    p_det: &ClassDistribution,
    p_tr: &ClassDistribution,
    alpha: f64,
) -> Result<ClassDistribution> {
    if p_det.len() != p_tr.len() {
        return invalid(format!(
            "class count mismatch: {} vs {}",
            p_det.len(),
            p_tr.len()
        ));
    }
    if alpha.is_nan() || alpha < 0.0 {
        return invalid(format!("alpha must be >= 0, got {alpha}"));
    }
    let prod: Vec<f64> = p_det
        .probs()
        .iter()
        .zip(p_tr.probs())
        .map(|(d, t)| d.max(FUSION_FLOOR) * t.max(FUSION_FLOOR).powf(alpha))
        .collect();
    ClassDistribution::from_weights(prod)
}

/// Mixture of fused scores over the null tracklet and `tracklet_dists`.
///
/// `weights[0]` belongs to the null tracklet, `weights[j + 1]` to
/// `tracklet_dists[j]`.
pub fn conditioned_score(
    p_det: &ClassDistribution,
    tracklet_dists: &[&ClassDistribution],
    weights: &[f64],
    params: &FusionParams,
) -> Result<ClassDistribution> {
    if weights.len() != tracklet_dists.len() + 1 {
        return invalid(format!(
            "expected {} association weights, got {}",
            tracklet_dists.len() + 1,
            weights.len()
        ));
    }
    if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
        return invalid("association weights must be nonnegative");
    }
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > DIST_SUM_TOL {
        return invalid(format!("association weights sum to {wsum}, not 1"));
    }

    let null = ClassDistribution::uniform(p_det.num_classes());
    let mut acc = vec![0.0; p_det.len()];
    for (w, dist) in weights
        .iter()
        .zip(std::iter::once(&null).chain(tracklet_dists.iter().copied()))
    {
        if *w == 0.0 {
            continue;
        }
        let fused = fuse_scores(p_det, dist, params.alpha)?;
        for (a, p) in acc.iter_mut().zip(fused.probs()) {
            *a += w * p;
        }
    }
    ClassDistribution::from_weights(acc)
}

/// Total foreground mass `sum_{c >= 1} p[c]`.
pub fn foreground_probability(p: &ClassDistribution) -> f64 {
    p.probs()[1..].iter().sum()
}

/// Two-class (foreground/background) conditioning used to rerank
/// proposals: the detector's foreground probability is fused with each
/// tracklet's aggregated foreground probability.
pub fn conditioned_foreground(
    det_fg: f64,
    tracklet_fg: &[f64],
    weights: &[f64],
    params: &FusionParams,
) -> Result<f64> {
    let two = |fg: f64| ClassDistribution::new(vec![1.0 - fg, fg]);
    let p_det = two(det_fg)?;
    let dists = tracklet_fg
        .iter()
        .map(|&fg| two(fg))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&ClassDistribution> = dists.iter().collect();
    let out = conditioned_score(&p_det, &refs, weights, params)?;
    Ok(out.probs()[1])
}

/// Embedding loss for a detected box: pulls the cosine toward 1 when the
/// box overlaps its ground truth by at least 0.5, otherwise pushes it to
/// at most 0.
pub fn tracking_loss(cos_sim: f64, iou_with_gt: f64) -> f64 {
    if iou_with_gt >= 0.5 {
        (1.0 - cos_sim).powi(2)
    } else {
        cos_sim.max(0.0).powi(2)
    }
}

/// Derivative of [`tracking_loss`] with respect to `cos_sim`.
pub fn tracking_loss_grad(cos_sim: f64, iou_with_gt: f64) -> f64 {
    if iou_with_gt >= 0.5 {
        -2.0 * (1.0 - cos_sim)
    } else {
        2.0 * cos_sim.max(0.0)
    }
}
