//! Detection and classification metrics.

mod table;

pub use table::{render_classification_table, render_detection_table, ClassificationRow, DetectionRow};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{iou, DetBox};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("dataset has no ground truth and no predictions")]
    EmptyDataset,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("class id {id} out of range for {k} classes")]
    ClassOutOfRange { id: usize, k: usize },
    #[error("IoU threshold {0} outside (0,1]")]
    InvalidThreshold(f64),
}

/// Outcome for one prediction. A true positive carries its ground-truth
/// index and IoU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredMatch {
    pub class_id: usize,
    pub conf: f64,
    pub gt: Option<usize>,
    pub iou: f64,
}

impl PredMatch {
    pub fn is_tp(&self) -> bool {
        self.gt.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Parallel to the prediction list.
    pub preds: Vec<PredMatch>,
    /// Parallel to the ground-truth list.
    pub gt_matched: Vec<bool>,
    pub iou_threshold: f64,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.preds.iter().filter(|p| p.is_tp()).count()
    }

    pub fn fp(&self) -> usize {
        self.preds.len() - self.tp()
    }
}

/// Indices of `confs` by descending value; ties keep input order.
fn rank(confs: impl Iterator<Item = f64>) -> Vec<usize> {
    let c: Vec<f64> = confs.collect();
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&a, &b| c[b].total_cmp(&c[a]));
    idx
}

/// Greedy matching. Predictions are visited by descending confidence; each
/// takes the unmatched same-class ground truth of highest IoU (lowest index
/// on ties) when that IoU reaches the threshold.
pub fn match_detections(preds: &[DetBox], gts: &[DetBox], iou_threshold: f64) -> MatchResult {
    let mut gt_matched = vec![false; gts.len()];
    let mut out: Vec<PredMatch> = preds
        .iter()
        .map(|p| PredMatch {
            class_id: p.class_id,
            conf: p.conf,
            gt: None,
            iou: 0.0,
        })
        .collect();
    for i in rank(preds.iter().map(|p| p.conf)) {
        let p = &preds[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if gt_matched[j] || g.class_id != p.class_id {
                continue;
            }
            let v = iou(p, g);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        if let Some((j, v)) = best {
            if v >= iou_threshold {
                gt_matched[j] = true;
                out[i].gt = Some(j);
                out[i].iou = v;
            }
        }
    }
    MatchResult {
        preds: out,
        gt_matched,
        iou_threshold,
    }
}

pub const RECALL_POINTS: usize = 101;

/// 101-point interpolated AP over `matches` ranked by descending confidence
/// (ties keep input order). `None` when there is neither ground truth nor
/// any prediction; 0 when there are predictions but no ground truth.
pub fn average_precision(matches: &[PredMatch], gt_count: usize) -> Option<f64> {
    if gt_count == 0 {
        return if matches.is_empty() { None } else { Some(0.0) };
    }
    let order = rank(matches.iter().map(|m| m.conf));
    let mut recall = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    let mut tp = 0usize;
    for (n, &i) in order.iter().enumerate() {
        if matches[i].is_tp() {
            tp += 1;
        }
        recall.push(tp as f64 / gt_count as f64);
        precision.push(tp as f64 / (n + 1) as f64);
    }
    // monotone envelope from the right
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    let mut k = 0usize;
    for r in 0..RECALL_POINTS {
        let t = r as f64 / 100.0;
        while k < recall.len() && recall[k] < t {
            k += 1;
        }
        if k == recall.len() {
            break;
        }
        sum += precision[k];
    }
    Some(sum / RECALL_POINTS as f64)
}

/// `0.50, 0.55, ..., 0.95`.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalScene {
    pub preds: Vec<DetBox>,
    pub gts: Vec<DetBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub num_classes: usize,
    pub thresholds: Vec<f64>,
    /// `[class][threshold]`; `None` marks a class with neither ground truth
    /// nor predictions.
    pub per_class_ap: Vec<Vec<Option<f64>>>,
    pub ap50: Vec<Option<f64>>,
    pub map50: f64,
    pub map50_95: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub miou: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
    /// `(K+1) x (K+1)`, rows ground truth, columns prediction. Index `K` is
    /// background: unmatched ground truth lands in column `K`, unmatched
    /// predictions in row `K`.
    pub confusion: Vec<Vec<u64>>,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn mean_defined(v: impl Iterator<Item = Option<f64>>) -> f64 {
    let (s, n) = v.flatten().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Per-class AP pooled over scenes at one threshold. Predictions are ranked
/// in scene order, then input order, before sorting by confidence.
fn class_aps(results: &[MatchResult], scenes: &[EvalScene], k: usize) -> Vec<Option<f64>> {
    let mut pooled: Vec<Vec<PredMatch>> = vec![Vec::new(); k];
    let mut gt_count = vec![0usize; k];
    for (r, s) in results.iter().zip(scenes) {
        for m in &r.preds {
            pooled[m.class_id].push(*m);
        }
        for g in &s.gts {
            gt_count[g.class_id] += 1;
        }
    }
    pooled
        .iter()
        .zip(gt_count)
        .map(|(m, g)| average_precision(m, g))
        .collect()
}

/// Class-agnostic greedy matching at `thr` for the detection confusion
/// matrix.
fn detection_confusion(scenes: &[EvalScene], k: usize, thr: f64) -> Vec<Vec<u64>> {
    let mut cm = vec![vec![0u64; k + 1]; k + 1];
    for s in scenes {
        let mut used = vec![false; s.gts.len()];
        for i in rank(s.preds.iter().map(|p| p.conf)) {
            let p = &s.preds[i];
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in s.gts.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let v = iou(p, g);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            match best {
                Some((j, v)) if v >= thr => {
                    used[j] = true;
                    cm[s.gts[j].class_id][p.class_id] += 1;
                }
                _ => cm[k][p.class_id] += 1,
            }
        }
        for (j, g) in s.gts.iter().enumerate() {
            if !used[j] {
                cm[g.class_id][k] += 1;
            }
        }
    }
    cm
}

/// Full detection summary. AP values use `thresholds`; precision, recall,
/// F1, mIoU and the confusion matrix use IoU 0.5. Ratios with a zero
/// denominator are 0.
pub fn map_range(scenes: &[EvalScene], thresholds: &[f64], num_classes: usize) -> Result<EvalSummary, EvalError> {
    map_range_at(scenes, thresholds, num_classes, 0.5)
}

/// [`map_range`] with precision, recall, F1, mIoU and the confusion matrix
/// taken at `match_iou` instead of 0.5. `ap50` and `map50` stay at 0.5.
pub fn map_range_at(
    scenes: &[EvalScene],
    thresholds: &[f64],
    num_classes: usize,
    match_iou: f64,
) -> Result<EvalSummary, EvalError> {
    if !(match_iou > 0.0 && match_iou <= 1.0) {
        return Err(EvalError::InvalidThreshold(match_iou));
    }
    if thresholds.is_empty() {
        return Err(EvalError::InvalidThreshold(f64::NAN));
    }
    if let Some(&t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(EvalError::InvalidThreshold(t));
    }
    for b in scenes.iter().flat_map(|s| s.preds.iter().chain(&s.gts)) {
        if b.class_id >= num_classes {
            return Err(EvalError::ClassOutOfRange {
                id: b.class_id,
                k: num_classes,
            });
        }
    }
    if scenes.iter().all(|s| s.preds.is_empty() && s.gts.is_empty()) {
        return Err(EvalError::EmptyDataset);
    }

    let at = |t: f64| -> Vec<MatchResult> { scenes.iter().map(|s| match_detections(&s.preds, &s.gts, t)).collect() };
    let per_threshold: Vec<Vec<Option<f64>>> =
        thresholds.iter().map(|&t| class_aps(&at(t), scenes, num_classes)).collect();
    let per_class_ap: Vec<Vec<Option<f64>>> = (0..num_classes)
        .map(|c| per_threshold.iter().map(|row| row[c]).collect())
        .collect();

    let m50 = at(0.5);
    let ap50 = class_aps(&m50, scenes, num_classes);
    let map50 = mean_defined(ap50.iter().copied());
    let map50_95 = mean_defined(per_class_ap.iter().flat_map(|r| r.iter().copied()));

    let op = if match_iou == 0.5 { m50 } else { at(match_iou) };
    let tp: usize = op.iter().map(|m| m.tp()).sum();
    let fp: usize = op.iter().map(|m| m.fp()).sum();
    let gts: usize = scenes.iter().map(|s| s.gts.len()).sum();
    let iou_sum: f64 = op.iter().flat_map(|m| m.preds.iter().filter(|p| p.is_tp()).map(|p| p.iou)).sum();
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, gts);
    Ok(EvalSummary {
        num_classes,
        thresholds: thresholds.to_vec(),
        per_class_ap,
        ap50,
        map50,
        map50_95,
        precision,
        recall,
        f1: harmonic(precision, recall),
        miou: if tp == 0 { 0.0 } else { iou_sum / tp as f64 },
        tp,
        fp,
        fn_count: gts - tp,
        confusion: detection_confusion(scenes, num_classes, match_iou),
    })
}

/// `K x K` counts, rows ground truth, columns prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) {
            return Err(EvalError::ClassOutOfRange { id: k, k });
        }
        Ok(Self { counts })
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt][pred]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion_matrix(pairs: &[(usize, usize)], k: usize) -> Result<ConfusionMatrix, EvalError> {
    let mut counts = vec![vec![0u64; k]; k];
    for &(g, p) in pairs {
        for id in [g, p] {
            if id >= k {
                return Err(EvalError::ClassOutOfRange { id, k });
            }
        }
        counts[g][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Classes never predicted, left out of macro precision.
    pub precision_excluded: Vec<usize>,
    /// Classes with no ground truth, left out of macro recall.
    pub recall_excluded: Vec<usize>,
}

/// Accuracy plus macro precision and recall; F1 is their harmonic mean.
pub fn summary_metrics(cm: &ConfusionMatrix) -> Result<ClassMetrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let (mut p_sum, mut p_n, mut p_ex) = (0.0, 0usize, Vec::new());
    let (mut r_sum, mut r_n, mut r_ex) = (0.0, 0usize, Vec::new());
    for i in 0..cm.k() {
        let d = cm.get(i, i) as f64;
        match cm.col_sum(i) {
            0 => p_ex.push(i),
            c => {
                p_sum += d / c as f64;
                p_n += 1;
            }
        }
        match cm.row_sum(i) {
            0 => r_ex.push(i),
            r => {
                r_sum += d / r as f64;
                r_n += 1;
            }
        }
    }
    let precision = if p_n == 0 { 0.0 } else { p_sum / p_n as f64 };
    let recall = if r_n == 0 { 0.0 } else { r_sum / r_n as f64 };
    Ok(ClassMetrics {
        accuracy: cm.trace() as f64 / total as f64,
        precision,
        recall,
        f1: harmonic(precision, recall),
        precision_excluded: p_ex,
        recall_excluded: r_ex,
    })
}
