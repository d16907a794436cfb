//! IoU-based optimal assignment between predicted tracks and detections.
//!
//! The Hungarian algorithm (potential form, O(n^3)) minimizes total
//! `1 - IoU`; pairs whose IoU falls below the gate are severed back into
//! the unmatched sets afterwards.

use crate::geometry::{iou, BoundingBox};

/// Cost assigned to dummy rows/columns used to square the matrix. Must
/// exceed any real cost (real costs are 1 - IoU <= 1).
const DUMMY_COST: f64 = 2.0;

/// Result of one association round, all indices into the input slices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Association {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Minimum-cost perfect assignment on a square cost matrix.
/// Returns `row_to_col`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // Potentials over rows (u) and columns (v); p[j] is the row matched
    // to column j, with index 0 used as a virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=n {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Associate predicted track boxes with detection boxes, maximizing total
/// IoU and gating at `iou_threshold`.
pub fn associate(
    tracks: &[BoundingBox],
    detections: &[BoundingBox],
    iou_threshold: f64,
) -> Association {
    let (nt, nd) = (tracks.len(), detections.len());
    if nt == 0 || nd == 0 {
        return Association {
            matches: Vec::new(),
            unmatched_tracks: (0..nt).collect(),
            unmatched_detections: (0..nd).collect(),
        };
    }
    let n = nt.max(nd);
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            (0..n)
                .map(|d| {
                    if t < nt && d < nd {
                        1.0 - iou(&tracks[t], &detections[d])
                    } else {
                        DUMMY_COST
                    }
                })
                .collect()
        })
        .collect();
    let row_to_col = hungarian(&cost);

    let mut matches = Vec::new();
    let mut unmatched_tracks = Vec::new();
    let mut matched_dets = vec![false; nd];
    for (t, track_box) in tracks.iter().enumerate() {
        let d = row_to_col[t];
        if d < nd && iou(track_box, &detections[d]) >= iou_threshold {
            matches.push((t, d));
            matched_dets[d] = true;
        } else {
            unmatched_tracks.push(t);
        }
    }
    let unmatched_detections = (0..nd).filter(|&d| !matched_dets[d]).collect();
    Association {
        matches,
        unmatched_tracks,
        unmatched_detections,
    }
}

/// Exhaustive-permutation optimum of total IoU; test oracle for the
/// Hungarian path, feasible up to ~6x6.
#[doc(hidden)]
pub fn brute_force_best_iou(tracks: &[BoundingBox], detections: &[BoundingBox]) -> f64 {
    fn recurse(
        tracks: &[BoundingBox],
        detections: &[BoundingBox],
        t: usize,
        used: &mut Vec<bool>,
    ) -> f64 {
        if t == tracks.len() {
            return 0.0;
        }
        // Option: leave track t unmatched.
        let mut best = recurse(tracks, detections, t + 1, used);
        for d in 0..detections.len() {
            if !used[d] {
                used[d] = true;
                let v = iou(&tracks[t], &detections[d]) + recurse(tracks, detections, t + 1, used);
                used[d] = false;
                best = best.max(v);
            }
        }
        best
    }
    let mut used = vec![false; detections.len()];
    recurse(tracks, detections, 0, &mut used)
}

/// Total IoU achieved by an association's matches.
pub fn total_iou(
    assoc: &Association,
    tracks: &[BoundingBox],
    detections: &[BoundingBox],
) -> f64 {
    assoc
        .matches
        .iter()
        .map(|&(t, d)| iou(&tracks[t], &detections[d]))
        .sum()
}
