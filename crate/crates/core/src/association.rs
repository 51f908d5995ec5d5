//! IoU cost matrices and gated optimal one-to-one matching.

use crate::assignment;
use crate::geometry::{iou, BBox};
use crate::model::{Detection, Track};
use crate::scalar::Real;

/// Detection-by-track IoU matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Real> CostMatrix<T> {
    /// Builds a matrix from row-major IoU values in `[0, 1]`.
    ///
    /// Panics if `values.len() != rows * cols`.
    pub fn from_values(rows: usize, cols: usize, values: Vec<T>) -> Self {
        assert_eq!(values.len(), rows * cols, "cost matrix shape mismatch");
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.cols + col]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchResult {
    /// `(detection_index, tracker_index)` pairs, sorted by detection index.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_trackers: Vec<usize>,
}

impl MatchResult {
    pub fn total_iou<T: Real>(&self, c: &CostMatrix<T>) -> T {
        self.matches
            .iter()
            .fold(T::zero(), |acc, &(i, j)| acc + c.get(i, j))
    }
}

pub fn iou_matrix_boxes<T: Real>(dets: &[BBox<T>], tracks: &[BBox<T>]) -> CostMatrix<T> {
    let values = dets
        .iter()
        .flat_map(|d| tracks.iter().map(move |t| iou(d, t)))
        .collect();
    CostMatrix::from_values(dets.len(), tracks.len(), values)
}

/// Class-agnostic IoU between every detection and every track's Kalman box.
pub fn iou_matrix<T: Real>(dets: &[Detection<T>], tracks: &[Track<T>]) -> CostMatrix<T> {
    let det_boxes: Vec<_> = dets.iter().map(|d| d.bbox).collect();
    let track_boxes: Vec<_> = tracks.iter().map(Track::bbox).collect();
    iou_matrix_boxes(&det_boxes, &track_boxes)
}

/// Maximum-total-IoU one-to-one matching restricted to pairs with
/// `IoU >= tau_iou`.
///
/// Gated and padding cells cost exactly as much as leaving both sides
/// unmatched, so the assignment optimum over the padded square problem is the
/// maximum-weight matching over feasible pairs.
pub fn match_iou<T: Real>(c: &CostMatrix<T>, tau_iou: T) -> MatchResult {
    let (n, m) = (c.rows, c.cols);
    if n == 0 || m == 0 {
        return MatchResult {
            matches: Vec::new(),
            unmatched_detections: (0..n).collect(),
            unmatched_trackers: (0..m).collect(),
        };
    }
    let size = n.max(m);
    let mut cost = vec![T::one(); size * size];
    for i in 0..n {
        for j in 0..m {
            let v = c.get(i, j);
            if v >= tau_iou {
                cost[i * size + j] = T::one() - v;
            }
        }
    }
    let assignment = assignment::solve(&cost, size, size);

    let mut det_used = vec![false; n];
    let mut trk_used = vec![false; m];
    let mut matches = Vec::new();
    for (i, &j) in assignment.iter().enumerate().take(n) {
        if j < m && c.get(i, j) >= tau_iou {
            matches.push((i, j));
            det_used[i] = true;
            trk_used[j] = true;
        }
    }
    MatchResult {
        matches,
        unmatched_detections: (0..n).filter(|&i| !det_used[i]).collect(),
        unmatched_trackers: (0..m).filter(|&j| !trk_used[j]).collect(),
    }
}
