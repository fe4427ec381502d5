//! Brute-force references shared by the property and acceptance tests.

use trackdet::association::{AssociationGraph, Edge};
use trackdet::geometry::iou;
use trackdet::BBox;

/// Suppression straight from the definition: walk boxes by descending score
/// (lower index first on ties) and drop any box overlapping a kept one.
pub fn naive_nms(boxes: &[BBox], scores: &[f64], thr: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..boxes.len()).collect();
    for i in 0..idx.len() {
        for j in i + 1..idx.len() {
            let (a, c) = (idx[i], idx[j]);
            if scores[c] > scores[a] || (scores[c] == scores[a] && c < a) {
                idx.swap(i, j);
            }
        }
    }
    let mut removed = vec![false; boxes.len()];
    let mut kept = Vec::new();
    for (pos, &i) in idx.iter().enumerate() {
        if removed[i] {
            continue;
        }
        kept.push(i);
        for &j in &idx[pos + 1..] {
            if iou(&boxes[i], &boxes[j]) >= thr {
                removed[j] = true;
            }
        }
    }
    kept
}

/// All matchings of the graph's edges, best total first; ties go to the
/// matching that contains the earliest edge in `(track_id, detection)` order,
/// then the next, and so on. Non-positive edges are never worth taking.
pub fn best_matching(g: &AssociationGraph) -> (f64, Vec<Option<u64>>) {
    let edges: Vec<&Edge> = g.edges.iter().filter(|e| e.weight > 0.0).collect();
    let mut best: Option<(f64, Vec<bool>)> = None;
    let mut chosen = vec![false; edges.len()];

    fn rec(
        k: usize,
        edges: &[&Edge],
        chosen: &mut Vec<bool>,
        used_t: &mut Vec<u64>,
        used_d: &mut Vec<usize>,
        total: f64,
        best: &mut Option<(f64, Vec<bool>)>,
    ) {
        if k == edges.len() {
            let better = match best {
                None => true,
                Some((bt, bc)) => {
                    total > *bt + 1e-9 || ((total - *bt).abs() <= 1e-9 && chosen > bc)
                }
            };
            if better {
                *best = Some((total, chosen.clone()));
            }
            return;
        }
        let ed = edges[k];
        if !used_t.contains(&ed.track_id) && !used_d.contains(&ed.detection) {
            chosen[k] = true;
            used_t.push(ed.track_id);
            used_d.push(ed.detection);
            rec(
                k + 1,
                edges,
                chosen,
                used_t,
                used_d,
                total + ed.weight,
                best,
            );
            used_t.pop();
            used_d.pop();
            chosen[k] = false;
        }
        rec(k + 1, edges, chosen, used_t, used_d, total, best);
    }
    rec(
        0,
        &edges,
        &mut chosen,
        &mut vec![],
        &mut vec![],
        0.0,
        &mut best,
    );
    let (total, picks) = best.unwrap();
    let mut out = vec![None; g.num_detections];
    for (ed, p) in edges.iter().zip(picks) {
        if p {
            out[ed.detection] = Some(ed.track_id);
        }
    }
    (total, out)
}

/// Calls `f` on every permutation of `p[k..]`.
pub fn permute(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}
