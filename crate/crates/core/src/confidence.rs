//! p-confidence mask extraction and scoring.
//!
//! Given `k` sampled segmentation hypotheses, a confidence mask with
//! requirement `p` is built by intersecting one mask from each of at least
//! `⌈k·p⌉` distinct samples. The intersection is contained in every mask it
//! was built from, so the fraction of samples containing it is at least `p`
//! by construction — the empirical analogue of "this region lies inside a
//! single true object with probability at least p".
//!
//! Each candidate is scored as the mean score-weighted IoU between the
//! intersection and its support masks: a tight, agreeing support scores high;
//! a small core carved out of wildly varying masks scores low. [`extract`]
//! greedily emits the highest-scoring candidate, claims its pixels, and
//! repeats; outputs are pairwise disjoint.

use thiserror::Error;

use crate::mask::{intersect_all_excluding, BinaryMask, MaskError};
use crate::model::{validate, SampleSet, Violation};

#[derive(Debug, Error)]
pub enum ConfidenceError {
    #[error("confidence requirement p must be in (0, 1], got {0}")]
    InvalidConfidence(f64),
    #[error("score floor must be in [0, 1], got {0}")]
    InvalidScoreFloor(f64),
    #[error("sample set is invalid: {}", format_violations(.0))]
    InvalidSampleSet(Vec<Violation>),
    #[error("confidence mask score needs a non-empty support set")]
    EmptySupport,
    #[error("confidence mask score needs a non-empty mask")]
    EmptyMask,
    #[error(transparent)]
    Mask(#[from] MaskError),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Parameters of the greedy extraction loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams {
    /// Confidence requirement `p` in (0, 1].
    pub p: f64,
    /// Stop once the best remaining candidate scores at or below this.
    pub score_floor: f64,
    /// Optional cap on emitted masks.
    pub max_outputs: Option<usize>,
}

impl ConfidenceParams {
    pub const DEFAULT_SCORE_FLOOR: f64 = 0.1;

    pub fn new(p: f64) -> Self {
        ConfidenceParams {
            p,
            score_floor: Self::DEFAULT_SCORE_FLOOR,
            max_outputs: None,
        }
    }

    fn check(&self) -> Result<(), ConfidenceError> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(ConfidenceError::InvalidConfidence(self.p));
        }
        if !(0.0..=1.0).contains(&self.score_floor) {
            return Err(ConfidenceError::InvalidScoreFloor(self.score_floor));
        }
        Ok(())
    }
}

/// An intersection-derived mask with its support set and score.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMask {
    pub mask: BinaryMask,
    /// Mean score-weighted IoU against the support masks.
    pub score: f64,
    /// `(sample index, instance index)` of every intersected mask, sorted by
    /// sample index. Sample indices are distinct and number at least `⌈k·p⌉`.
    pub support: Vec<(usize, usize)>,
    /// The confidence requirement this mask was built for.
    pub p: f64,
    /// Modal category over the support masks (ties go to the lowest id).
    pub category: u32,
}

/// Support masks needed so that `|support| / k ≥ p`: `⌈k·p⌉`, clamped to
/// `[1, k]`. The product is nudged down by an epsilon before the ceiling so
/// decimal requirements behave as written (`0.9` of 100 samples means 90,
/// not 91 from the binary representation of 0.9 landing above it).
pub fn required_support(k: usize, p: f64) -> usize {
    let raw = (k as f64 * p - 1e-9).ceil();
    (raw.max(1.0) as usize).min(k.max(1))
}

/// Build the best intersection candidate seeded at `anchor`, ignoring pixels
/// in `claimed`.
///
/// From every other sample the single mask with the largest unclaimed
/// intersection with the anchor is selected (ties to the lowest instance
/// index); the `⌈k·p⌉ − 1` best of those with strictly positive overlap join
/// the anchor as the support set. Returns the intersection of all support
/// masks minus `claimed`, or `None` when too few samples overlap the anchor
/// or the intersection comes up empty.
pub fn candidate(
    set: &SampleSet,
    anchor: (usize, usize),
    claimed: &BinaryMask,
    p: f64,
) -> Result<Option<(BinaryMask, Vec<(usize, usize)>)>, MaskError> {
    let (anchor_sample, anchor_instance) = anchor;
    let anchor_mask = &set.samples[anchor_sample].instances[anchor_instance].mask;
    let required = required_support(set.k(), p);

    let anchor_unclaimed = anchor_mask.subtract(claimed)?;
    if anchor_unclaimed.is_empty() {
        return Ok(None);
    }

    // (overlap, sample, instance): best representative per other sample
    let mut others: Vec<(u64, usize, usize)> = Vec::new();
    for (g, hypothesis) in set.samples.iter().enumerate() {
        if g == anchor_sample {
            continue;
        }
        let mut best: Option<(u64, usize)> = None;
        for (j, inst) in hypothesis.instances.iter().enumerate() {
            let overlap = anchor_unclaimed.intersection_area(&inst.mask)?;
            if overlap > 0 && best.map_or(true, |(b, _)| overlap > b) {
                best = Some((overlap, j));
            }
        }
        if let Some((overlap, j)) = best {
            others.push((overlap, g, j));
        }
    }
    if others.len() + 1 < required {
        return Ok(None);
    }
    others.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    others.truncate(required - 1);

    let mut support = vec![anchor];
    support.extend(others.iter().map(|&(_, g, j)| (g, j)));
    support.sort_unstable();

    let masks: Vec<&BinaryMask> = support
        .iter()
        .map(|&(g, j)| &set.samples[g].instances[j].mask)
        .collect();
    let mask = intersect_all_excluding(&masks, claimed)?;
    if mask.is_empty() {
        return Ok(None);
    }
    Ok(Some((mask, support)))
}

/// Mean score-weighted IoU between `mask` and its support:
/// `s = (1/|I|) · Σ_j s_j · |mask ∩ m_j| / |mask ∪ m_j|`.
pub fn score_confidence_mask(
    mask: &BinaryMask,
    support: &[(&BinaryMask, f64)],
) -> Result<f64, ConfidenceError> {
    if support.is_empty() {
        return Err(ConfidenceError::EmptySupport);
    }
    if mask.is_empty() {
        return Err(ConfidenceError::EmptyMask);
    }
    let mut total = 0.0;
    for (support_mask, score) in support {
        let inter = mask.intersection_area(support_mask)?;
        let union = mask.area() + support_mask.area() - inter;
        total += score * (inter as f64 / union as f64);
    }
    Ok(total / support.len() as f64)
}

struct ScoredCandidate {
    mask: BinaryMask,
    support: Vec<(usize, usize)>,
    score: f64,
    category: u32,
}

fn evaluate_anchor(
    set: &SampleSet,
    anchor: (usize, usize),
    claimed: &BinaryMask,
    p: f64,
) -> Result<Option<ScoredCandidate>, ConfidenceError> {
    let Some((mask, support)) = candidate(set, anchor, claimed, p)? else {
        return Ok(None);
    };
    let scored: Vec<(&BinaryMask, f64)> = support
        .iter()
        .map(|&(g, j)| {
            let inst = &set.samples[g].instances[j];
            (&inst.mask, inst.score)
        })
        .collect();
    let score = score_confidence_mask(&mask, &scored)?;
    let category = modal_category(set, &support);
    Ok(Some(ScoredCandidate {
        mask,
        support,
        score,
        category,
    }))
}

fn modal_category(set: &SampleSet, support: &[(usize, usize)]) -> u32 {
    let mut counts = std::collections::BTreeMap::new();
    for &(g, j) in support {
        *counts.entry(set.samples[g].instances[j].category).or_insert(0usize) += 1;
    }
    // BTreeMap iterates in ascending id order, so strict > keeps the lowest id
    let mut best = (0u32, 0usize);
    for (category, count) in counts {
        if count > best.1 {
            best = (category, count);
        }
    }
    best.0
}

/// Greedy confidence-mask extraction.
///
/// Each round evaluates every `(sample, instance)` anchor against the pixels
/// claimed so far, emits the best-scoring candidate, and claims its pixels.
/// Stops when the best candidate scores at or below `score_floor`, no
/// candidate remains, or `max_outputs` is reached. Outputs are pairwise
/// disjoint and sorted by descending score (stable in emission order).
pub fn extract(
    set: &SampleSet,
    params: &ConfidenceParams,
) -> Result<Vec<ConfidenceMask>, ConfidenceError> {
    params.check()?;
    let violations = validate(set);
    if !violations.is_empty() {
        return Err(ConfidenceError::InvalidSampleSet(violations));
    }

    let anchors: Vec<(usize, usize)> = set
        .samples
        .iter()
        .enumerate()
        .flat_map(|(g, h)| (0..h.instances.len()).map(move |j| (g, j)))
        .collect();

    let mut claimed = BinaryMask::empty(set.width, set.height)?;
    // A candidate only changes when the newly claimed pixels touch its
    // anchor, so cache per-anchor results and invalidate selectively.
    let mut cache: Vec<Option<Option<ScoredCandidate>>> = Vec::new();
    cache.resize_with(anchors.len(), || None);

    let mut outputs: Vec<ConfidenceMask> = Vec::new();
    loop {
        if let Some(cap) = params.max_outputs {
            if outputs.len() >= cap {
                break;
            }
        }
        let mut best: Option<usize> = None;
        for (idx, &anchor) in anchors.iter().enumerate() {
            if cache[idx].is_none() {
                cache[idx] = Some(evaluate_anchor(set, anchor, &claimed, params.p)?);
            }
            if let Some(Some(cand)) = &cache[idx] {
                let better = match best {
                    None => true,
                    Some(b) => {
                        let best_score = cache[b].as_ref().unwrap().as_ref().unwrap().score;
                        cand.score > best_score
                    }
                };
                if better {
                    best = Some(idx);
                }
            }
        }
        let Some(best_idx) = best else { break };
        let chosen = cache[best_idx].take().unwrap().unwrap();
        if chosen.score <= params.score_floor {
            break;
        }
        claimed = claimed.union_of(&chosen.mask)?;
        for (idx, &(g, j)) in anchors.iter().enumerate() {
            if matches!(cache[idx], Some(_)) {
                let anchor_mask = &set.samples[g].instances[j].mask;
                if anchor_mask.intersection_area(&chosen.mask)? > 0 {
                    cache[idx] = None;
                }
            }
        }
        outputs.push(ConfidenceMask {
            mask: chosen.mask,
            score: chosen.score,
            support: chosen.support,
            p: params.p,
            category: chosen.category,
        });
    }

    outputs.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(outputs)
}
