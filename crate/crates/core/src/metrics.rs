//! Matching and evaluation metrics: mAP, AR (IoU or IoG), max recall at high
//! precision, ROC-AUC calibration, and IoP exceedance fractions.
//!
//! Matching walks predictions in canonical (descending score) order and
//! assigns each to the unmatched same-class ground truth with maximal
//! overlap, provided that overlap reaches the threshold; every ground truth
//! is consumed by at most one match. PR curves are built by sweeping score
//! cutoffs over the *distinct* prediction scores, so metrics are invariant to
//! any positive monotone transformation of the scores. Average precision uses
//! the 101-point precision-envelope convention, so numbers line up with
//! standard COCO tooling.
//!
//! Aggregation across images tallies integer TP/FP counts before any
//! division, making dataset-level results independent of image order.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::mask::{BinaryMask, MaskError};
use crate::model::{canonical_order, Instance};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no ground-truth instances to evaluate against")]
    NoGroundTruth,
    #[error("ROC-AUC needs both positive and negative labels")]
    SingleClass,
    #[error("threshold grid must be non-empty")]
    EmptyGrid,
    #[error("match threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// Which overlap ratio drives matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapKind {
    Iou,
    Iop,
    Iog,
}

impl OverlapKind {
    pub fn compute(self, pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MaskError> {
        match self {
            OverlapKind::Iou => pred.iou(gt),
            OverlapKind::Iop => pred.iop(gt),
            OverlapKind::Iog => pred.iog(gt),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchSpec {
    pub overlap: OverlapKind,
    pub threshold: f64,
    pub class_aware: bool,
}

impl MatchSpec {
    pub fn new(overlap: OverlapKind, threshold: f64) -> Self {
        MatchSpec {
            overlap,
            threshold,
            class_aware: true,
        }
    }

    fn check(&self) -> Result<(), MetricsError> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(MetricsError::InvalidThreshold(self.threshold));
        }
        Ok(())
    }
}

/// Per-prediction outcome, reported in canonical score order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLabel {
    /// Index into the original prediction list.
    pub index: usize,
    pub score: f64,
    pub is_tp: bool,
    /// Matched ground-truth index, for true positives.
    pub matched_gt: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub labels: Vec<PredictionLabel>,
    pub gt_matched: Vec<bool>,
    pub n_gt: usize,
    pub n_pred: usize,
}

impl MatchOutcome {
    pub fn true_positives(&self) -> usize {
        self.labels.iter().filter(|l| l.is_tp).count()
    }
}

/// Greedy score-ordered matching of predictions to ground truth.
pub fn match_instances(
    predictions: &[Instance],
    ground_truths: &[Instance],
    spec: &MatchSpec,
) -> Result<MatchOutcome, MetricsError> {
    spec.check()?;
    let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
    let order = canonical_order(&scores);
    let mut gt_matched = vec![false; ground_truths.len()];
    let mut labels = Vec::with_capacity(predictions.len());
    for &pi in &order {
        let pred = &predictions[pi];
        let mut best: Option<(f64, usize)> = None;
        for (gi, gt) in ground_truths.iter().enumerate() {
            if gt_matched[gi] || (spec.class_aware && gt.category != pred.category) {
                continue;
            }
            let ratio = spec.overlap.compute(&pred.mask, &gt.mask)?;
            if ratio >= spec.threshold && best.map_or(true, |(b, _)| ratio > b) {
                best = Some((ratio, gi));
            }
        }
        match best {
            Some((_, gi)) => {
                gt_matched[gi] = true;
                labels.push(PredictionLabel {
                    index: pi,
                    score: pred.score,
                    is_tp: true,
                    matched_gt: Some(gi),
                });
            }
            None => labels.push(PredictionLabel {
                index: pi,
                score: pred.score,
                is_tp: false,
                matched_gt: None,
            }),
        }
    }
    Ok(MatchOutcome {
        labels,
        gt_matched,
        n_gt: ground_truths.len(),
        n_pred: predictions.len(),
    })
}

/// The standard COCO threshold grid 0.5, 0.55, ..., 0.95.
pub fn standard_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// The high-precision grid used for max-recall-at-high-precision.
pub fn high_precision_grid() -> Vec<f64> {
    vec![0.75, 0.8, 0.85, 0.9, 0.95]
}

/// One image's predictions and ground truth.
#[derive(Debug, Clone, Copy)]
pub struct EvalInput<'a> {
    pub predictions: &'a [Instance],
    pub ground_truths: &'a [Instance],
}

/// Pairwise overlaps between one class's predictions and ground truths in
/// one image, with the prediction scores. The substrate every dataset-level
/// metric matches on, so each (pred, gt) overlap is computed exactly once.
struct ImageEvidence {
    scores: Vec<f64>,
    overlaps: Vec<Vec<f64>>,
}

struct ClassEvidence {
    images: Vec<ImageEvidence>,
    n_gt: u64,
}

fn build_evidence(
    dataset: &[EvalInput<'_>],
    kind: OverlapKind,
) -> Result<BTreeMap<u32, ClassEvidence>, MetricsError> {
    let mut classes: BTreeSet<u32> = BTreeSet::new();
    for image in dataset {
        classes.extend(image.ground_truths.iter().map(|g| g.category));
        classes.extend(image.predictions.iter().map(|p| p.category));
    }
    let mut evidence: BTreeMap<u32, ClassEvidence> = classes
        .into_iter()
        .map(|c| {
            (
                c,
                ClassEvidence {
                    images: Vec::new(),
                    n_gt: 0,
                },
            )
        })
        .collect();
    for image in dataset {
        for (&class, ev) in evidence.iter_mut() {
            let preds: Vec<&Instance> = image
                .predictions
                .iter()
                .filter(|p| p.category == class)
                .collect();
            let gts: Vec<&Instance> = image
                .ground_truths
                .iter()
                .filter(|g| g.category == class)
                .collect();
            ev.n_gt += gts.len() as u64;
            if preds.is_empty() {
                continue;
            }
            let mut overlaps = Vec::with_capacity(preds.len());
            for pred in &preds {
                let mut row = Vec::with_capacity(gts.len());
                for gt in &gts {
                    row.push(kind.compute(&pred.mask, &gt.mask)?);
                }
                overlaps.push(row);
            }
            ev.images.push(ImageEvidence {
                scores: preds.iter().map(|p| p.score).collect(),
                overlaps,
            });
        }
    }
    Ok(evidence)
}

/// Greedy matching over a precomputed overlap matrix; returns per-prediction
/// scores and TP flags in canonical order.
fn match_evidence(ev: &ImageEvidence, threshold: f64) -> (Vec<f64>, Vec<bool>) {
    let order = canonical_order(&ev.scores);
    let n_gt = ev.overlaps.first().map_or(0, |row| row.len());
    let mut gt_matched = vec![false; n_gt];
    let mut scores = Vec::with_capacity(order.len());
    let mut tp = Vec::with_capacity(order.len());
    for &pi in &order {
        let mut best: Option<(f64, usize)> = None;
        for (gi, &ratio) in ev.overlaps[pi].iter().enumerate() {
            if !gt_matched[gi] && ratio >= threshold && best.map_or(true, |(b, _)| ratio > b) {
                best = Some((ratio, gi));
            }
        }
        scores.push(ev.scores[pi]);
        tp.push(match best {
            Some((_, gi)) => {
                gt_matched[gi] = true;
                true
            }
            None => false,
        });
    }
    (scores, tp)
}

/// Cumulative (tp, fp) counts at each distinct-score cutoff, descending.
/// Entry `(t, tp, fp)` covers all predictions with score ≥ t.
fn distinct_score_curve(mut labeled: Vec<(f64, bool)>) -> Vec<(f64, u64, u64)> {
    labeled.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < labeled.len() {
        let score = labeled[i].0;
        while i < labeled.len() && labeled[i].0 == score {
            if labeled[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.push((score, tp, fp));
    }
    curve
}

/// Area under the precision envelope, sampled at 101 recall points.
fn ap_from_curve(curve: &[(f64, u64, u64)], n_gt: u64) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut precisions: Vec<f64> = curve
        .iter()
        .map(|&(_, tp, fp)| tp as f64 / (tp + fp) as f64)
        .collect();
    let recalls: Vec<f64> = curve
        .iter()
        .map(|&(_, tp, _)| tp as f64 / n_gt as f64)
        .collect();
    // precision envelope: monotone non-increasing from the right
    for i in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[i] = precisions[i].max(precisions[i + 1]);
    }
    let mut total = 0.0;
    for step in 0..=100u32 {
        let r = step as f64 / 100.0;
        // first cutoff reaching recall r; the envelope makes it the max precision
        if let Some(idx) = recalls.iter().position(|&rec| rec >= r) {
            total += precisions[idx];
        }
    }
    total / 101.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApResult {
    /// AP averaged over thresholds, then over classes with ground truth.
    pub map: f64,
    /// Per-class AP (averaged over thresholds).
    pub per_class: BTreeMap<u32, f64>,
    /// Classes that appeared only in predictions; excluded from the average.
    pub excluded_classes: Vec<u32>,
}

/// Average precision per class and mAP over a threshold grid.
pub fn average_precision(
    dataset: &[EvalInput<'_>],
    kind: OverlapKind,
    thresholds: &[f64],
) -> Result<ApResult, MetricsError> {
    if thresholds.is_empty() {
        return Err(MetricsError::EmptyGrid);
    }
    let evidence = build_evidence(dataset, kind)?;
    let mut per_class = BTreeMap::new();
    let mut excluded = Vec::new();
    for (&class, ev) in &evidence {
        if ev.n_gt == 0 {
            excluded.push(class);
            continue;
        }
        let mut ap_sum = 0.0;
        for &threshold in thresholds {
            let mut labeled = Vec::new();
            for image in &ev.images {
                let (scores, tp) = match_evidence(image, threshold);
                labeled.extend(scores.into_iter().zip(tp));
            }
            ap_sum += ap_from_curve(&distinct_score_curve(labeled), ev.n_gt);
        }
        per_class.insert(class, ap_sum / thresholds.len() as f64);
    }
    if per_class.is_empty() {
        return Err(MetricsError::NoGroundTruth);
    }
    let map = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok(ApResult {
        map,
        per_class,
        excluded_classes: excluded,
    })
}

/// Recall (matched GT over total GT, pooled across classes and images)
/// averaged over the standard threshold grid, using all predictions.
pub fn average_recall(dataset: &[EvalInput<'_>], kind: OverlapKind) -> Result<f64, MetricsError> {
    let evidence = build_evidence(dataset, kind)?;
    let total_gt: u64 = evidence.values().map(|ev| ev.n_gt).sum();
    if total_gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    let thresholds = standard_thresholds();
    let mut recall_sum = 0.0;
    for &threshold in &thresholds {
        let mut matched = 0u64;
        for ev in evidence.values() {
            for image in &ev.images {
                let (_, tp) = match_evidence(image, threshold);
                matched += tp.iter().filter(|&&t| t).count() as u64;
            }
        }
        recall_sum += matched as f64 / total_gt as f64;
    }
    Ok(recall_sum / thresholds.len() as f64)
}

/// Max recall at high precision.
///
/// For every precision requirement `p_i` and IoP threshold `τ_j`, predictions
/// are matched with IoP at `τ_j`; among distinct-score cutoffs whose pooled
/// precision reaches `p_i`, the best recall is taken (zero when none
/// qualifies). The result averages those recalls over the grid.
pub fn mr_at_hp(
    dataset: &[EvalInput<'_>],
    p_grid: &[f64],
    tau_grid: &[f64],
) -> Result<f64, MetricsError> {
    if p_grid.is_empty() || tau_grid.is_empty() {
        return Err(MetricsError::EmptyGrid);
    }
    let evidence = build_evidence(dataset, OverlapKind::Iop)?;
    let total_gt: u64 = evidence.values().map(|ev| ev.n_gt).sum();
    if total_gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    let mut total = 0.0;
    for &tau in tau_grid {
        let mut labeled = Vec::new();
        for ev in evidence.values() {
            for image in &ev.images {
                let (scores, tp) = match_evidence(image, tau);
                labeled.extend(scores.into_iter().zip(tp));
            }
        }
        let curve = distinct_score_curve(labeled);
        for &p in p_grid {
            let mut best_recall = 0.0f64;
            for &(_, tp, fp) in &curve {
                let precision = tp as f64 / (tp + fp) as f64;
                if precision >= p {
                    best_recall = best_recall.max(tp as f64 / total_gt as f64);
                }
            }
            total += best_recall;
        }
    }
    Ok(total / (p_grid.len() * tau_grid.len()) as f64)
}

/// Rank-statistic (Mann-Whitney) ROC-AUC with average ranks for ties.
pub fn roc_auc(scored_labels: &[(f64, bool)]) -> Result<f64, MetricsError> {
    let n_pos = scored_labels.iter().filter(|(_, l)| *l).count() as u64;
    let n_neg = scored_labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scored_labels.len()).collect();
    order.sort_by(|&a, &b| scored_labels[a].0.total_cmp(&scored_labels[b].0));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let score = scored_labels[order[i]].0;
        let start = i;
        while i < order.len() && scored_labels[order[i]].0 == score {
            i += 1;
        }
        // 1-based average rank of the tie group [start, i)
        let avg_rank = (start + 1 + i) as f64 / 2.0;
        for &idx in &order[start..i] {
            if scored_labels[idx].1 {
                rank_sum_pos += avg_rank;
            }
        }
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// IoP exceedance for one bucket of predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExceedanceStats {
    pub n_predictions: u64,
    pub n_exceeding: u64,
    /// `None` when the bucket holds no predictions.
    pub fraction: Option<f64>,
}

/// Fraction of predictions whose best-ground-truth IoP exceeds `iop_cut`.
/// Class-agnostic: a prediction sitting inside any true object counts,
/// whatever the class.
pub fn iop_exceedance(
    dataset: &[EvalInput<'_>],
    iop_cut: f64,
) -> Result<ExceedanceStats, MetricsError> {
    let mut n_predictions = 0u64;
    let mut n_exceeding = 0u64;
    for image in dataset {
        for pred in image.predictions {
            n_predictions += 1;
            let mut best = 0.0f64;
            for gt in image.ground_truths {
                best = best.max(pred.mask.iop(&gt.mask)?);
            }
            if best > iop_cut {
                n_exceeding += 1;
            }
        }
    }
    let fraction = (n_predictions > 0).then(|| n_exceeding as f64 / n_predictions as f64);
    Ok(ExceedanceStats {
        n_predictions,
        n_exceeding,
        fraction,
    })
}

/// A point on a PR curve: every prediction scoring at least `score` is kept.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PrPoint {
    pub score: f64,
    pub precision: f64,
    pub recall: f64,
}

/// PR curve for one class at one overlap threshold, swept over
/// distinct-score cutoffs (descending).
pub fn pr_curve(
    dataset: &[EvalInput<'_>],
    class: u32,
    kind: OverlapKind,
    threshold: f64,
) -> Result<Vec<PrPoint>, MetricsError> {
    let evidence = build_evidence(dataset, kind)?;
    let Some(ev) = evidence.get(&class) else {
        return Ok(Vec::new());
    };
    if ev.n_gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    let mut labeled = Vec::new();
    for image in &ev.images {
        let (scores, tp) = match_evidence(image, threshold);
        labeled.extend(scores.into_iter().zip(tp));
    }
    Ok(distinct_score_curve(labeled)
        .into_iter()
        .map(|(score, tp, fp)| PrPoint {
            score,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / ev.n_gt as f64,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::BinaryMask;

    fn rect(rows: std::ops::Range<u32>, cols: std::ops::Range<u32>) -> BinaryMask {
        BinaryMask::rect(20, 20, rows, cols).unwrap()
    }

    fn inst(mask: BinaryMask, category: u32, score: f64) -> Instance {
        Instance::new(mask, category, score)
    }

    #[test]
    fn match_identical_predictions_all_tp() {
        let gts = vec![
            inst(rect(0..3, 0..3), 1, 1.0),
            inst(rect(8..11, 8..11), 1, 1.0),
        ];
        let outcome = match_instances(&gts, &gts, &MatchSpec::new(OverlapKind::Iou, 0.5)).unwrap();
        assert_eq!(outcome.true_positives(), 2);
        assert!(outcome.gt_matched.iter().all(|&m| m));
    }

    #[test]
    fn match_no_predictions() {
        let gts = vec![inst(rect(0..3, 0..3), 1, 1.0)];
        let outcome = match_instances(&[], &gts, &MatchSpec::new(OverlapKind::Iou, 0.5)).unwrap();
        assert_eq!(outcome.labels.len(), 0);
        assert_eq!(outcome.gt_matched, vec![false]);
    }

    #[test]
    fn match_competition_resolved_by_score() {
        let gt = vec![inst(rect(0..4, 0..4), 1, 1.0)];
        let preds = vec![
            inst(rect(0..4, 0..4), 1, 0.6),
            inst(rect(0..4, 0..4), 1, 0.9),
            inst(rect(0..4, 1..5), 1, 0.7),
        ];
        let outcome = match_instances(&preds, &gt, &MatchSpec::new(OverlapKind::Iou, 0.5)).unwrap();
        // canonical order: 1 (0.9) wins the GT, 2 and 0 are FPs
        assert_eq!(outcome.labels[0].index, 1);
        assert!(outcome.labels[0].is_tp);
        assert!(!outcome.labels[1].is_tp);
        assert!(!outcome.labels[2].is_tp);
    }

    #[test]
    fn match_maximizes_overlap_among_eligible() {
        let gts = vec![
            inst(rect(0..4, 0..4), 1, 1.0),
            inst(rect(0..4, 2..6), 1, 1.0),
        ];
        // IoU 1.0 against gt0, partial against gt1
        let preds = vec![inst(rect(0..4, 0..4), 1, 0.9)];
        let outcome =
            match_instances(&preds, &gts, &MatchSpec::new(OverlapKind::Iou, 0.1)).unwrap();
        assert_eq!(outcome.labels[0].matched_gt, Some(0));
    }

    #[test]
    fn match_is_class_aware() {
        let gts = vec![inst(rect(0..3, 0..3), 2, 1.0)];
        let preds = vec![inst(rect(0..3, 0..3), 1, 0.9)];
        let spec = MatchSpec::new(OverlapKind::Iou, 0.5);
        let outcome = match_instances(&preds, &gts, &spec).unwrap();
        assert!(!outcome.labels[0].is_tp);
        let mut agnostic = spec;
        agnostic.class_aware = false;
        let outcome = match_instances(&preds, &gts, &agnostic).unwrap();
        assert!(outcome.labels[0].is_tp);
    }

    #[test]
    fn match_invariant_to_monotone_score_transform() {
        let gts = vec![
            inst(rect(0..3, 0..3), 1, 1.0),
            inst(rect(8..11, 8..11), 1, 1.0),
        ];
        let preds = vec![
            inst(rect(0..3, 0..3), 1, 0.31),
            inst(rect(8..11, 8..11), 1, 0.62),
            inst(rect(14..17, 2..5), 1, 0.05),
        ];
        let spec = MatchSpec::new(OverlapKind::Iou, 0.5);
        let base = match_instances(&preds, &gts, &spec).unwrap();
        let transformed: Vec<Instance> = preds
            .iter()
            .map(|p| inst(p.mask.clone(), p.category, (p.score * 0.5 + 0.1).sqrt()))
            .collect();
        let mapped = match_instances(&transformed, &gts, &spec).unwrap();
        let base_flags: Vec<(usize, bool)> =
            base.labels.iter().map(|l| (l.index, l.is_tp)).collect();
        let mapped_flags: Vec<(usize, bool)> =
            mapped.labels.iter().map(|l| (l.index, l.is_tp)).collect();
        assert_eq!(base_flags, mapped_flags);
    }

    #[test]
    fn perfect_predictions_reach_every_metric_ceiling() {
        let gts = vec![
            inst(rect(0..3, 0..3), 1, 1.0),
            inst(rect(8..11, 8..11), 1, 1.0),
        ];
        let dataset = [EvalInput {
            predictions: &gts,
            ground_truths: &gts,
        }];
        let ap = average_precision(&dataset, OverlapKind::Iou, &standard_thresholds()).unwrap();
        assert_eq!(ap.map, 1.0);
        assert_eq!(average_recall(&dataset, OverlapKind::Iou).unwrap(), 1.0);
        assert_eq!(average_recall(&dataset, OverlapKind::Iog).unwrap(), 1.0);
        let grid = high_precision_grid();
        assert_eq!(mr_at_hp(&dataset, &grid, &grid).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_predictions_score_zero() {
        let gts = vec![inst(rect(0..3, 0..3), 1, 1.0)];
        let preds = vec![inst(rect(10..13, 10..13), 1, 0.9)];
        let dataset = [EvalInput {
            predictions: &preds,
            ground_truths: &gts,
        }];
        let ap = average_precision(&dataset, OverlapKind::Iou, &standard_thresholds()).unwrap();
        assert_eq!(ap.map, 0.0);
        assert_eq!(average_recall(&dataset, OverlapKind::Iou).unwrap(), 0.0);
        let grid = high_precision_grid();
        assert_eq!(mr_at_hp(&dataset, &grid, &grid).unwrap(), 0.0);
    }

    #[test]
    fn ap_handles_duplicate_and_miss() {
        // 2 GT; one matched twice (second is FP), one missed entirely.
        let gts = vec![
            inst(rect(0..4, 0..4), 1, 1.0),
            inst(rect(10..14, 10..14), 1, 1.0),
        ];
        let preds = vec![
            inst(rect(0..4, 0..4), 1, 0.9),
            inst(rect(0..4, 0..4), 1, 0.8),
        ];
        let dataset = [EvalInput {
            predictions: &preds,
            ground_truths: &gts,
        }];
        let ap = average_precision(&dataset, OverlapKind::Iou, &[0.5]).unwrap();
        // curve: (0.9 -> tp=1 fp=0, r=0.5), (0.8 -> tp=1 fp=1, r=0.5);
        // envelope precision 1.0 up to recall 0.5, unreachable beyond:
        // AP = 51/101.
        assert!((ap.map - 51.0 / 101.0).abs() < 1e-12);
    }

    #[test]
    fn ap_excludes_classes_without_gt() {
        let gts = vec![inst(rect(0..3, 0..3), 1, 1.0)];
        let preds = vec![
            inst(rect(0..3, 0..3), 1, 0.9),
            inst(rect(5..8, 5..8), 7, 0.8),
        ];
        let dataset = [EvalInput {
            predictions: &preds,
            ground_truths: &gts,
        }];
        let ap = average_precision(&dataset, OverlapKind::Iou, &[0.5]).unwrap();
        assert_eq!(ap.excluded_classes, vec![7]);
        assert!(ap.per_class.contains_key(&1));
        assert!(!ap.per_class.contains_key(&7));
    }

    #[test]
    fn ap_never_increases_with_trailing_false_positive() {
        let gts = vec![
            inst(rect(0..4, 0..4), 1, 1.0),
            inst(rect(10..14, 10..14), 1, 1.0),
        ];
        let mut preds = vec![
            inst(rect(0..4, 0..4), 1, 0.9),
            inst(rect(10..14, 11..15), 1, 0.7),
        ];
        let dataset = [EvalInput {
            predictions: &preds,
            ground_truths: &gts,
        }];
        let before = average_precision(&dataset, OverlapKind::Iou, &standard_thresholds())
            .unwrap()
            .map;
        preds.push(inst(rect(16..19, 16..19), 1, 0.01));
        let dataset = [EvalInput {
            predictions: &preds,
            ground_truths: &gts,
        }];
        let after = average_precision(&dataset, OverlapKind::Iou, &standard_thresholds())
            .unwrap()
            .map;
        assert!(after <= before + 1e-15);
    }

    #[test]
    fn ar_counts_partial_coverage_over_grid() {
        // one of two GT covered at IoG 0.7: recall is 0.5 for thresholds
        // at or below 0.7, zero above.
        let gts = vec![
            inst(rect(0..10, 0..10), 1, 1.0),
            inst(rect(12..18, 12..18), 1, 1.0),
        ];
        let preds = vec![inst(rect(0..7, 0..10), 1, 0.9)];
        assert_eq!(preds[0].mask.iog(&gts[0].mask).unwrap(), 0.7);
        let dataset = [EvalInput {
            predictions: &preds,
            ground_truths: &gts,
        }];
        let ar = average_recall(&dataset, OverlapKind::Iog).unwrap();
        let expected: f64 = standard_thresholds()
            .iter()
            .map(|&t| if 0.7 >= t { 0.5 } else { 0.0 })
            .sum::<f64>()
            / 10.0;
        assert!((ar - expected).abs() < 1e-12);
    }

    #[test]
    fn ar_errors_without_gt() {
        let preds = vec![inst(rect(0..3, 0..3), 1, 0.9)];
        let dataset = [EvalInput {
            predictions: &preds,
            ground_truths: &[],
        }];
        assert!(matches!(
            average_recall(&dataset, OverlapKind::Iou),
            Err(MetricsError::NoGroundTruth)
        ));
    }

    #[test]
    fn mrhp_zero_when_precision_never_reached() {
        // every second prediction is junk: precision tops out at 0.5
        let gts = vec![
            inst(rect(0..4, 0..4), 1, 1.0),
            inst(rect(10..14, 10..14), 1, 1.0),
        ];
        let preds = vec![
            inst(rect(0..4, 0..4), 1, 0.9),
            inst(rect(5..8, 5..8), 1, 0.9),
            inst(rect(10..14, 10..14), 1, 0.4),
            inst(rect(16..19, 0..3), 1, 0.4),
        ];
        let dataset = [EvalInput {
            predictions: &preds,
            ground_truths: &gts,
        }];
        let grid = high_precision_grid();
        assert_eq!(mr_at_hp(&dataset, &grid, &grid).unwrap(), 0.0);
    }

    #[test]
    fn roc_auc_perfect_separation() {
        let scored = [(0.9, true), (0.8, true), (0.3, false), (0.1, false)];
        assert_eq!(roc_auc(&scored).unwrap(), 1.0);
    }

    #[test]
    fn roc_auc_all_tied_is_half() {
        let scored = [(0.5, true), (0.5, false), (0.5, true), (0.5, false)];
        assert_eq!(roc_auc(&scored).unwrap(), 0.5);
    }

    #[test]
    fn roc_auc_hand_computed_case() {
        let scored = [(0.9, true), (0.7, false), (0.6, true), (0.2, false)];
        assert_eq!(roc_auc(&scored).unwrap(), 0.75);
    }

    #[test]
    fn roc_auc_complements_on_negated_labels() {
        let scored = [
            (0.9, true),
            (0.7, false),
            (0.65, true),
            (0.2, false),
            (0.2, true),
        ];
        let negated: Vec<(f64, bool)> = scored.iter().map(|&(s, l)| (s, !l)).collect();
        let a = roc_auc(&scored).unwrap();
        let b = roc_auc(&negated).unwrap();
        assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn roc_auc_single_class_is_error() {
        assert!(matches!(
            roc_auc(&[(0.5, true)]),
            Err(MetricsError::SingleClass)
        ));
    }

    #[test]
    fn iop_exceedance_contained_and_disjoint() {
        let gts = vec![inst(rect(0..10, 0..10), 1, 1.0)];
        let contained = vec![inst(rect(2..5, 2..5), 1, 0.9)];
        let dataset = [EvalInput {
            predictions: &contained,
            ground_truths: &gts,
        }];
        let stats = iop_exceedance(&dataset, 0.95).unwrap();
        assert_eq!(stats.fraction, Some(1.0));

        let disjoint = vec![inst(rect(12..15, 12..15), 1, 0.9)];
        let dataset = [EvalInput {
            predictions: &disjoint,
            ground_truths: &gts,
        }];
        let stats = iop_exceedance(&dataset, 0.95).unwrap();
        assert_eq!(stats.fraction, Some(0.0));
    }

    #[test]
    fn iop_exceedance_mixed_bucket() {
        let gts = vec![inst(rect(0..10, 0..10), 1, 1.0)];
        let preds = vec![
            inst(rect(1..4, 1..4), 1, 0.9),     // inside
            inst(rect(2..6, 2..6), 1, 0.9),     // inside
            inst(rect(8..12, 8..12), 1, 0.9),   // iop 0.25
            inst(rect(12..15, 12..15), 1, 0.9), // disjoint
        ];
        let dataset = [EvalInput {
            predictions: &preds,
            ground_truths: &gts,
        }];
        let stats = iop_exceedance(&dataset, 0.95).unwrap();
        assert_eq!(stats.fraction, Some(0.5));
    }

    #[test]
    fn iop_exceedance_empty_bucket_is_absent() {
        let gts = vec![inst(rect(0..10, 0..10), 1, 1.0)];
        let dataset = [EvalInput {
            predictions: &[],
            ground_truths: &gts,
        }];
        let stats = iop_exceedance(&dataset, 0.95).unwrap();
        assert_eq!(stats.fraction, None);
    }

    #[test]
    fn pr_curve_monotone_recall() {
        let gts = vec![
            inst(rect(0..4, 0..4), 1, 1.0),
            inst(rect(10..14, 10..14), 1, 1.0),
        ];
        let preds = vec![
            inst(rect(0..4, 0..4), 1, 0.9),
            inst(rect(5..8, 5..8), 1, 0.6),
            inst(rect(10..14, 10..14), 1, 0.3),
        ];
        let dataset = [EvalInput {
            predictions: &preds,
            ground_truths: &gts,
        }];
        let curve = pr_curve(&dataset, 1, OverlapKind::Iou, 0.5).unwrap();
        assert_eq!(curve.len(), 3);
        assert!(curve.windows(2).all(|w| w[0].recall <= w[1].recall));
        assert!(curve.windows(2).all(|w| w[0].score > w[1].score));
    }
}
