#![allow(dead_code)]

pub mod oracles;

use proptest::prelude::*;
use trackdet::{BBox, ClassDistribution, Embedding};

pub fn bbox() -> impl Strategy<Value = BBox> {
    (0.0..200.0f64, 0.0..200.0f64, 0.5..80.0f64, 0.5..80.0f64)
        .prop_map(|(x, y, w, h)| BBox::from_xywh(x, y, w, h).unwrap())
}

/// Boxes on a half-unit grid, so a quarter-unit raster counts their areas
/// exactly.
pub fn grid_bbox() -> impl Strategy<Value = BBox> {
    (0u32..40, 0u32..40, 0u32..20, 0u32..20).prop_map(|(x, y, w, h)| {
        let (x, y) = (x as f64 * 0.5, y as f64 * 0.5);
        BBox::new(x, y, x + w as f64 * 0.5, y + h as f64 * 0.5).unwrap()
    })
}

pub fn dist(num_classes: usize) -> impl Strategy<Value = ClassDistribution> {
    prop::collection::vec(0.001..1.0f64, num_classes + 1)
        .prop_map(|w| ClassDistribution::from_weights(w).unwrap())
}

pub fn embedding(dim: usize) -> impl Strategy<Value = Embedding> {
    prop::collection::vec(-1.0..1.0f64, dim)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|v| Embedding::new(v).unwrap())
}

pub fn d(v: &[f64]) -> ClassDistribution {
    ClassDistribution::new(v.to_vec()).unwrap()
}

pub fn e(v: &[f64]) -> Embedding {
    Embedding::new(v.to_vec()).unwrap()
}

pub fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
    BBox::new(x1, y1, x2, y2).unwrap()
}
