//! Detection metrics: mAP at IoU > 0.5, per-class precision/recall/F1 and the
//! F1-maximizing confidence threshold.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::model::Detection;

/// A detection counts as correct only when IoU strictly exceeds this.
pub const IOU_GATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthObject {
    pub bbox: BBox<f64>,
    pub class_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFrame {
    pub frame_index: u64,
    pub objects: Vec<GroundTruthObject>,
}

/// Predictions and ground truth of one sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSequence {
    pub id: String,
    pub predictions: BTreeMap<u64, Vec<Detection<f64>>>,
    pub ground_truth: BTreeMap<u64, Vec<GroundTruthObject>>,
}

impl EvalSequence {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            ..Self::default()
        }
    }

    pub fn with_ground_truth(mut self, frames: &[GroundTruthFrame]) -> Self {
        for f in frames {
            self.ground_truth.insert(f.frame_index, f.objects.clone());
        }
        self
    }
}

/// Outcome of greedy matching on one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMatch {
    /// True positive flag per detection, in input order.
    pub is_tp: Vec<bool>,
    pub false_negatives: usize,
}

impl FrameMatch {
    pub fn true_positives(&self) -> usize {
        self.is_tp.iter().filter(|&&t| t).count()
    }

    pub fn false_positives(&self) -> usize {
        self.is_tp.len() - self.true_positives()
    }
}

/// Indices of `dets` by descending confidence, stable on ties.
fn confidence_order(dets: &[Detection<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].conf.total_cmp(&dets[a].conf));
    order
}

/// Greedy matching in confidence order. A detection is a true positive when it
/// has the same class as, and IoU > 0.5 with, a still-unmatched ground truth
/// object; it takes the highest-IoU such object.
pub fn match_frame(dets: &[Detection<f64>], gts: &[GroundTruthObject]) -> FrameMatch {
    let mut used = vec![false; gts.len()];
    let mut is_tp = vec![false; dets.len()];
    for i in confidence_order(dets) {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if used[g] || gt.class_id != d.class_id {
                continue;
            }
            let v = iou(&d.bbox, &gt.bbox);
            if v > IOU_GATE && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
            is_tp[i] = true;
        }
    }
    FrameMatch {
        false_negatives: used.iter().filter(|&&u| !u).count(),
        is_tp,
    }
}

/// All-point interpolated average precision for confidence-ranked TP flags.
pub fn average_precision(ranked_tp: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 || ranked_tp.is_empty() {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(ranked_tp.len());
    let mut precision = Vec::with_capacity(ranked_tp.len());
    let mut tp = 0usize;
    for (k, &hit) in ranked_tp.iter().enumerate() {
        if hit {
            tp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub ap: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: BTreeMap<u32, ClassMetrics>,
    pub map: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub threshold_used: f64,
}

#[derive(Debug, Clone, Default)]
struct ClassPool {
    /// `(confidence, is_tp)` in corpus order.
    entries: Vec<(f64, bool)>,
    n_gt: usize,
}

/// Every prediction of a corpus matched against ground truth once.
///
/// Greedy matching processes detections by descending confidence, so the
/// flags of detections above any threshold do not depend on the detections
/// below it. Thresholded metrics therefore come from counting.
#[derive(Debug, Clone, Default)]
pub struct MatchedCorpus {
    classes: BTreeMap<u32, ClassPool>,
}

impl MatchedCorpus {
    pub fn build(sequences: &[EvalSequence]) -> Result<Self> {
        let mut classes: BTreeMap<u32, ClassPool> = BTreeMap::new();
        let mut any_gt = false;
        for seq in sequences {
            let frames: BTreeSet<u64> = seq
                .predictions
                .keys()
                .chain(seq.ground_truth.keys())
                .copied()
                .collect();
            for f in frames {
                let dets = seq.predictions.get(&f).map(Vec::as_slice).unwrap_or(&[]);
                let gts = seq.ground_truth.get(&f).map(Vec::as_slice).unwrap_or(&[]);
                any_gt |= !gts.is_empty();
                for g in gts {
                    classes.entry(g.class_id).or_default().n_gt += 1;
                }
                let m = match_frame(dets, gts);
                for (d, tp) in dets.iter().zip(m.is_tp) {
                    classes.entry(d.class_id).or_default().entries.push((d.conf, tp));
                }
            }
        }
        if !any_gt {
            return Err(Error::EmptyGroundTruth);
        }
        for pool in classes.values_mut() {
            pool.entries.sort_by(|a, b| b.0.total_cmp(&a.0));
        }
        Ok(Self { classes })
    }

    /// Metrics counting detections with `conf >= threshold`. AP always uses
    /// every detection.
    pub fn report_at(&self, threshold: f64) -> MetricsReport {
        let mut per_class = BTreeMap::new();
        let (mut ap_sum, mut p_sum, mut r_sum, mut f_sum, mut n) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for (&class, pool) in &self.classes {
            let flags: Vec<bool> = pool.entries.iter().map(|e| e.1).collect();
            let ap = average_precision(&flags, pool.n_gt);
            let kept = pool.entries.iter().take_while(|e| e.0 >= threshold);
            let (tp, fp) = kept.fold((0, 0), |(t, f), e| if e.1 { (t + 1, f) } else { (t, f + 1) });
            let fn_ = pool.n_gt - tp;
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, pool.n_gt);
            let m = ClassMetrics {
                ap,
                precision,
                recall,
                f1: f1(precision, recall),
                tp,
                fp,
                fn_,
            };
            // classes without ground truth are reported but not averaged
            if pool.n_gt > 0 {
                ap_sum += ap;
                p_sum += m.precision;
                r_sum += m.recall;
                f_sum += m.f1;
                n += 1;
            }
            per_class.insert(class, m);
        }
        MetricsReport {
            per_class,
            map: ratio_f(ap_sum, n),
            mean_precision: ratio_f(p_sum, n),
            mean_recall: ratio_f(r_sum, n),
            mean_f1: ratio_f(f_sum, n),
            threshold_used: threshold,
        }
    }

    /// Sweeps the threshold grid and returns the threshold with the highest
    /// mean F1, preferring the higher threshold on ties.
    pub fn f1_max_threshold(&self, grid_step: f64, epsilon: f64) -> Result<(f64, MetricsReport)> {
        let mut best: Option<MetricsReport> = None;
        for thr in threshold_grid(grid_step, epsilon)? {
            let r = self.report_at(thr);
            if best.as_ref().is_none_or(|b| r.mean_f1 >= b.mean_f1) {
                best = Some(r);
            }
        }
        let best = best.expect("grid is never empty");
        Ok((best.threshold_used, best))
    }
}

fn ratio_f(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// `{0, step, 2 step, ...}` below `1 - epsilon`, then `1 - epsilon`.
pub fn threshold_grid(step: f64, epsilon: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::Config(format!("grid step must lie in (0, 0.5], got {step}")));
    }
    let top = 1.0 - epsilon;
    let mut grid = Vec::new();
    let mut k = 0u64;
    loop {
        // snap away accumulated representation error, e.g. 70 * 0.01
        let v = (k as f64 * step * 1e9).round() / 1e9;
        if v >= top {
            break;
        }
        grid.push(v);
        k += 1;
    }
    grid.push(top);
    Ok(grid)
}

/// Convenience wrapper over [`MatchedCorpus`].
pub fn f1_max_threshold(
    sequences: &[EvalSequence],
    grid_step: f64,
    epsilon: f64,
) -> Result<(f64, MetricsReport)> {
    MatchedCorpus::build(sequences)?.f1_max_threshold(grid_step, epsilon)
}

pub fn evaluate_at(sequences: &[EvalSequence], threshold: f64) -> Result<MetricsReport> {
    Ok(MatchedCorpus::build(sequences)?.report_at(threshold))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassErrorStats {
    /// Predictions localized on a ground truth object (class-agnostic IoU > 0.5).
    pub localized: usize,
    /// Of those, predictions carrying the wrong class.
    pub wrong_class: usize,
}

impl ClassErrorStats {
    pub fn rate(&self) -> f64 {
        ratio(self.wrong_class, self.localized)
    }
}

/// Fraction of well-localized predictions whose class disagrees with the
/// ground truth object they overlap.
pub fn class_error_rate(sequences: &[EvalSequence]) -> ClassErrorStats {
    let mut stats = ClassErrorStats::default();
    for seq in sequences {
        for (f, dets) in &seq.predictions {
            let gts = seq.ground_truth.get(f).map(Vec::as_slice).unwrap_or(&[]);
            let mut used = vec![false; gts.len()];
            for i in confidence_order(dets) {
                let d = &dets[i];
                let best = gts
                    .iter()
                    .enumerate()
                    .filter(|(g, _)| !used[*g])
                    .map(|(g, gt)| (g, iou(&d.bbox, &gt.bbox)))
                    .filter(|&(_, v)| v > IOU_GATE)
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                if let Some((g, _)) = best {
                    used[g] = true;
                    stats.localized += 1;
                    if gts[g].class_id != d.class_id {
                        stats.wrong_class += 1;
                    }
                }
            }
        }
    }
    stats
}
