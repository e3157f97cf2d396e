//! Classification and detection metrics.

use alloc::vec::Vec;

use crate::scene::{bbox_iou, BBox};

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall <= 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// `num / den`, or 0 for an empty denominator.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Square confusion matrix, rows = truth, columns = prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: alloc::vec![0; classes * classes] }
    }

    /// Panics if either index is out of range.
    pub fn add(&mut self, truth: usize, predicted: usize) {
        assert!(truth < self.classes && predicted < self.classes, "class index out of range");
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth * self.classes + predicted]
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Rows of the matrix.
    pub fn rows(&self) -> Vec<Vec<usize>> {
        self.counts.chunks(self.classes.max(1)).map(<[usize]>::to_vec).collect()
    }

    pub fn class_metrics(&self, c: usize) -> ClassMetrics {
        let tp = self.get(c, c);
        let predicted: usize = (0..self.classes).map(|t| self.get(t, c)).sum();
        let actual: usize = (0..self.classes).map(|p| self.get(c, p)).sum();
        let (precision, recall) = (ratio(tp, predicted), ratio(tp, actual));
        ClassMetrics { precision, recall, f1: f1(precision, recall), support: actual }
    }

    pub fn per_class(&self) -> Vec<ClassMetrics> {
        (0..self.classes).map(|c| self.class_metrics(c)).collect()
    }

    /// Unweighted mean of the per-class F1 scores.
    pub fn macro_f1(&self) -> f64 {
        if self.classes == 0 {
            return 0.0;
        }
        self.per_class().iter().map(|m| m.f1).sum::<f64>() / self.classes as f64
    }

    pub fn accuracy(&self) -> f64 {
        ratio((0..self.classes).map(|c| self.get(c, c)).sum(), self.total())
    }
}

/// A scored predicted box in image `image`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub image: usize,
    pub bbox: BBox,
    pub score: f64,
}

/// A ground-truth box in image `image`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthBox {
    pub image: usize,
    pub bbox: BBox,
}

/// IoU thresholds 0.50, 0.55, .., 0.95.
pub const IOU_GRID: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

/// Average precision at one IoU threshold.
///
/// Predictions are visited by descending score (stable on ties); each takes
/// the unmatched ground truth of its image with the highest IoU if that IoU
/// reaches the threshold. AP is the area under the precision envelope
/// (all-point interpolation). With no ground truth the AP is 0.
pub fn ap_at_iou(predictions: &[ScoredBox], ground_truths: &[GroundTruthBox], iou_threshold: f64) -> f64 {
    if ground_truths.is_empty() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[b].score.total_cmp(&predictions[a].score));
    let mut used = alloc::vec![false; ground_truths.len()];
    let mut hits = Vec::with_capacity(order.len());
    for &i in &order {
        let p = &predictions[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in ground_truths.iter().enumerate() {
            if used[g] || gt.image != p.image {
                continue;
            }
            let iou = bbox_iou(&p.bbox, &gt.bbox);
            if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
        }
        hits.push(best.is_some());
    }
    ap_from_hits(&hits, ground_truths.len())
}

/// AP for a ranked list of hit/miss flags against `n_gt` ground truths.
fn ap_from_hits(hits: &[bool], n_gt: usize) -> f64 {
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (k, &h) in hits.iter().enumerate() {
        tp += usize::from(h);
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ApSummary {
    pub ap50: f64,
    pub ap75: f64,
    /// Mean over the IoU grid, [`IOU_GRID`] by default.
    pub map: f64,
}

pub fn ap_summary(predictions: &[ScoredBox], ground_truths: &[GroundTruthBox]) -> ApSummary {
    ap_summary_on_grid(predictions, ground_truths, &IOU_GRID)
}

/// Like [`ap_summary`] with `map` averaged over `grid` instead. An empty grid
/// gives `map = 0`.
pub fn ap_summary_on_grid(predictions: &[ScoredBox], ground_truths: &[GroundTruthBox], grid: &[f64]) -> ApSummary {
    let map = if grid.is_empty() {
        0.0
    } else {
        grid.iter().map(|&t| ap_at_iou(predictions, ground_truths, t)).sum::<f64>() / grid.len() as f64
    };
    ApSummary {
        ap50: ap_at_iou(predictions, ground_truths, 0.5),
        ap75: ap_at_iou(predictions, ground_truths, 0.75),
        map,
    }
}
