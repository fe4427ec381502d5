//! Detection-to-tracklet association as maximum-weight bipartite matching.
//!
//! Left nodes are the active tracklets plus one pseudo tracklet per
//! detection; right nodes are the detections. A tracklet is connected to a
//! detection when its last box overlaps it, with the embedding cosine as
//! weight. Each pseudo tracklet connects only to its own detection, with
//! weight 0, so a detection whose best available cosine is not positive
//! starts a new tracklet.

use crate::error::{invalid, Result};
use crate::geometry::{iou, BBox};
use crate::scoring::Embedding;
use crate::tracklets::{TrackId, Tracklet};

/// Tracklet side of the graph.
#[derive(Debug, Clone, Copy)]
pub struct TrackNode<'a> {
    pub id: TrackId,
    pub last_box: &'a BBox,
    pub embedding: &'a Embedding,
}

impl<'a> From<&'a Tracklet> for TrackNode<'a> {
    fn from(t: &'a Tracklet) -> Self {
        Self {
            id: t.id(),
            last_box: t.last_box(),
            embedding: t.embedding(),
        }
    }
}

/// Detection side of the graph.
#[derive(Debug, Clone, Copy)]
pub struct DetNode<'a> {
    pub bbox: &'a BBox,
    pub embedding: &'a Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub track_id: TrackId,
    pub detection: usize,
    pub weight: f64,
}

/// Real tracklet-detection edges; pseudo edges are implicit (one per
/// detection, weight 0).
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationGraph {
    /// Tracklet ids in ascending order.
    pub track_ids: Vec<TrackId>,
    pub num_detections: usize,
    /// Sorted by `(track_id, detection)`.
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Track { id: TrackId, weight: f64 },
    New,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationResult {
    /// One outcome per detection, in detection order.
    pub outcomes: Vec<Outcome>,
}

impl AssociationResult {
    pub fn matched_track(&self, detection: usize) -> Option<TrackId> {
        match self.outcomes.get(detection) {
            Some(Outcome::Track { id, .. }) => Some(*id),
            _ => None,
        }
    }

    /// Sum of matched edge weights.
    pub fn total_weight(&self) -> f64 {
        self.outcomes
            .iter()
            .map(|o| match o {
                Outcome::Track { weight, .. } => *weight,
                Outcome::New => 0.0,
            })
            .sum()
    }
}

pub fn build_graph(
    tracks: &[TrackNode<'_>],
    detections: &[DetNode<'_>],
    edge_min_iou: f64,
) -> Result<AssociationGraph> {
    let mut sorted: Vec<&TrackNode<'_>> = tracks.iter().collect();
    sorted.sort_by_key(|t| t.id);
    if sorted.windows(2).any(|w| w[0].id == w[1].id) {
        return invalid("duplicate tracklet id in association input");
    }

    let mut edges = Vec::new();
    for t in &sorted {
        for (i, d) in detections.iter().enumerate() {
            if iou(t.last_box, d.bbox) > edge_min_iou {
                edges.push(Edge {
                    track_id: t.id,
                    detection: i,
                    weight: d.embedding.cosine(t.embedding)?,
                });
            }
        }
    }
    Ok(AssociationGraph {
        track_ids: sorted.iter().map(|t| t.id).collect(),
        num_detections: detections.len(),
        edges,
    })
}

/// Maximum-total-weight matching. Among equally good matchings the one
/// containing the lexicographically smallest `(track_id, detection)` pairs
/// wins. Edges with non-positive weight never beat the pseudo tracklet and
/// are left out.
pub fn solve(graph: &AssociationGraph) -> AssociationResult {
    let m = graph.track_ids.len();
    let n = graph.num_detections;
    let mut outcomes = vec![Outcome::New; n];
    let usable: Vec<&Edge> = graph.edges.iter().filter(|e| e.weight > 0.0).collect();
    if usable.is_empty() {
        return AssociationResult { outcomes };
    }

    let row_of = |id: TrackId| {
        graph
            .track_ids
            .binary_search(&id)
            .expect("edge refers to a tracklet in the graph")
    };

    // Rows: tracklets then pseudo tracklets. Columns: detections then one
    // "unmatched" column per tracklet.
    let size = m + n;
    let forbidden = -2.0 * (size as f64 + 1.0);
    let mut w = vec![vec![forbidden; size]; size];
    for row in w.iter_mut().take(m) {
        row[n..].iter_mut().for_each(|x| *x = 0.0);
    }
    for i in 0..n {
        w[m + i][i] = 0.0;
        w[m + i][n..].iter_mut().for_each(|x| *x = 0.0);
    }
    for e in &usable {
        w[row_of(e.track_id)][e.detection] = e.weight;
    }

    let mut sol = hungarian(&w);
    let tol = 1e-9 * sol.total.abs().max(1.0);

    // Lexicographic tie-breaking: fix each edge in order if some optimal
    // matching still contains it, otherwise forbid it. An edge that is not
    // tight under the optimal potentials is in no optimal matching, so only
    // tight edges need a re-solve.
    for e in &usable {
        let (r, c) = (row_of(e.track_id), e.detection);
        if sol.assign[r] == c {
            pin(&mut w, r, c, forbidden);
            continue;
        }
        if sol.reduced_cost(&w, r, c) > tol {
            w[r][c] = forbidden;
            continue;
        }
        let mut trial = w.clone();
        pin(&mut trial, r, c, forbidden);
        let trial_sol = hungarian(&trial);
        if trial_sol.total >= sol.total - tol {
            w = trial;
            sol = trial_sol;
        } else {
            w[r][c] = forbidden;
        }
    }

    let assign = sol.assign;
    for (r, &c) in assign.iter().enumerate().take(m) {
        if c < n {
            let weight = w[r][c];
            assert!(weight > forbidden, "forbidden pair in assignment");
            outcomes[c] = Outcome::Track {
                id: graph.track_ids[r],
                weight,
            };
        }
    }
    AssociationResult { outcomes }
}

/// Forces `(r, c)` by forbidding every other entry in its row and column.
fn pin(w: &mut [Vec<f64>], r: usize, c: usize, forbidden: f64) {
    let keep = w[r][c];
    w[r].iter_mut().for_each(|x| *x = forbidden);
    w.iter_mut().for_each(|row| row[c] = forbidden);
    w[r][c] = keep;
}

struct Solution {
    total: f64,
    assign: Vec<usize>,
    /// Row and column potentials of the cost `-w` (1-based, index 0 unused).
    u: Vec<f64>,
    v: Vec<f64>,
}

impl Solution {
    /// Nonnegative for a feasible dual; zero on edges that can be matched.
    fn reduced_cost(&self, w: &[Vec<f64>], r: usize, c: usize) -> f64 {
        -w[r][c] - self.u[r + 1] - self.v[c + 1]
    }
}

/// Hungarian algorithm on a square weight matrix; returns the maximum total
/// weight and the column assigned to each row.
pub fn hungarian_max(w: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let s = hungarian(w);
    (s.total, s.assign)
}

fn hungarian(w: &[Vec<f64>]) -> Solution {
    let n = w.len();
    if n == 0 {
        return Solution {
            total: 0.0,
            assign: Vec::new(),
            u: vec![0.0],
            v: vec![0.0],
        };
    }
    // Minimize cost = -weight with row/column potentials (1-based).
    let cost = |i: usize, j: usize| -w[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let total = assign.iter().enumerate().map(|(r, &c)| w[r][c]).sum();
    Solution {
        total,
        assign,
        u,
        v,
    }
}
