//! Score-ordered non-maximum suppression and the high-recall Union-NMS
//! variant.
//!
//! Standard NMS walks instances in descending score order and drops any
//! instance overlapping an already-kept one above the IoU threshold. Union-NMS
//! runs standard NMS over all instances flattened from the `k` sampled
//! hypotheses, then returns each keeper unioned with every mask it
//! suppressed — recovering object extent that single-sample NMS throws away.

use thiserror::Error;

use crate::mask::MaskError;
use crate::model::{canonical_order, Instance, SampleSet};

#[derive(Debug, Error)]
pub enum NmsError {
    #[error("IoU threshold tau must be in (0, 1), got {0}")]
    InvalidTau(f64),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmsParams {
    /// Suppress at IoU strictly greater than this.
    pub tau: f64,
    /// Only instances of the same category suppress each other.
    pub class_aware: bool,
}

impl NmsParams {
    /// The conventional suppression threshold.
    pub const DEFAULT_TAU: f64 = 0.5;

    pub fn new(tau: f64) -> Self {
        NmsParams {
            tau,
            class_aware: true,
        }
    }

    fn check(&self) -> Result<(), NmsError> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(NmsError::InvalidTau(self.tau));
        }
        Ok(())
    }
}

impl Default for NmsParams {
    fn default() -> Self {
        Self::new(Self::DEFAULT_TAU)
    }
}

/// Result of standard NMS over one instance list.
#[derive(Debug, Clone, PartialEq)]
pub struct NmsOutcome {
    /// Input indices of kept instances, in processing (descending score) order.
    pub kept: Vec<usize>,
    /// For each input index, the keeper that suppressed it — its first
    /// suppressor in keep order. `None` for kept instances.
    pub suppressed_by: Vec<Option<usize>>,
}

/// Standard score-ordered NMS.
///
/// An instance is kept iff no already-kept instance (of the same class, when
/// `class_aware`) has IoU above `tau` with it. Each suppressed instance is
/// assigned to exactly one keeper: the first one, in keep order, that
/// overlaps it above the threshold.
pub fn standard_nms(instances: &[Instance], params: &NmsParams) -> Result<NmsOutcome, NmsError> {
    params.check()?;
    let scores: Vec<f64> = instances.iter().map(|i| i.score).collect();
    let order = canonical_order(&scores);

    let mut kept: Vec<usize> = Vec::new();
    let mut suppressed_by: Vec<Option<usize>> = vec![None; instances.len()];
    for &idx in &order {
        let inst = &instances[idx];
        let mut suppressor = None;
        for &keeper in &kept {
            let k = &instances[keeper];
            if params.class_aware && k.category != inst.category {
                continue;
            }
            if k.mask.iou(&inst.mask)? > params.tau {
                suppressor = Some(keeper);
                break;
            }
        }
        match suppressor {
            Some(keeper) => suppressed_by[idx] = Some(keeper),
            None => kept.push(idx),
        }
    }
    Ok(NmsOutcome {
        kept,
        suppressed_by,
    })
}

/// Union-NMS over a sample set.
///
/// Flattens the instances of all `k` hypotheses (sample order, then instance
/// order), runs standard NMS, and emits one instance per keeper whose mask is
/// the union of the keeper with everything it suppressed, carrying the
/// keeper's score and category.
pub fn union_nms(set: &SampleSet, params: &NmsParams) -> Result<Vec<Instance>, NmsError> {
    let flattened: Vec<&Instance> = set
        .samples
        .iter()
        .flat_map(|h| h.instances.iter())
        .collect();
    let owned: Vec<Instance> = flattened.iter().map(|&i| i.clone()).collect();
    let outcome = standard_nms(&owned, params)?;

    let mut outputs = Vec::with_capacity(outcome.kept.len());
    for &keeper in &outcome.kept {
        let mut mask = owned[keeper].mask.clone();
        for (idx, suppressor) in outcome.suppressed_by.iter().enumerate() {
            if *suppressor == Some(keeper) {
                mask = mask.union_of(&owned[idx].mask)?;
            }
        }
        outputs.push(Instance {
            mask,
            category: owned[keeper].category,
            score: owned[keeper].score,
        });
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::BinaryMask;
    use crate::model::Hypothesis;

    fn rect(rows: std::ops::Range<u32>, cols: std::ops::Range<u32>) -> BinaryMask {
        BinaryMask::rect(16, 16, rows, cols).unwrap()
    }

    #[test]
    fn single_instance_kept() {
        let instances = vec![Instance::new(rect(0..3, 0..3), 1, 0.9)];
        let outcome = standard_nms(&instances, &NmsParams::default()).unwrap();
        assert_eq!(outcome.kept, vec![0]);
        assert_eq!(outcome.suppressed_by, vec![None]);
    }

    #[test]
    fn duplicate_suppressed_by_higher_score() {
        let m = rect(0..3, 0..3);
        let instances = vec![
            Instance::new(m.clone(), 1, 0.8),
            Instance::new(m.clone(), 1, 0.9),
        ];
        let outcome = standard_nms(&instances, &NmsParams::default()).unwrap();
        assert_eq!(outcome.kept, vec![1]);
        assert_eq!(outcome.suppressed_by, vec![Some(1), None]);
    }

    #[test]
    fn chain_suppression_keeps_third() {
        // A-B IoU 0.6, B-C IoU 0.6, A-C IoU ~0.1; scores 0.9/0.8/0.7, tau 0.5:
        // B suppressed by A; C survives because its only >tau overlap (B) was
        // not kept.
        let a = rect(0..4, 0..10);
        let b = rect(0..4, 2..12);
        let c = rect(0..4, 4..14);
        assert!(a.iou(&b).unwrap() > 0.5);
        assert!(b.iou(&c).unwrap() > 0.5);
        assert!(a.iou(&c).unwrap() < 0.5);
        let instances = vec![
            Instance::new(a, 1, 0.9),
            Instance::new(b, 1, 0.8),
            Instance::new(c, 1, 0.7),
        ];
        let outcome = standard_nms(&instances, &NmsParams::default()).unwrap();
        assert_eq!(outcome.kept, vec![0, 2]);
        assert_eq!(outcome.suppressed_by, vec![None, Some(0), None]);
    }

    #[test]
    fn class_aware_ignores_other_categories() {
        let m = rect(0..3, 0..3);
        let instances = vec![
            Instance::new(m.clone(), 1, 0.9),
            Instance::new(m.clone(), 2, 0.8),
        ];
        let outcome = standard_nms(&instances, &NmsParams::default()).unwrap();
        assert_eq!(outcome.kept, vec![0, 1]);

        let mut params = NmsParams::default();
        params.class_aware = false;
        let outcome = standard_nms(&instances, &params).unwrap();
        assert_eq!(outcome.kept, vec![0]);
    }

    #[test]
    fn invalid_tau_is_error() {
        assert!(matches!(
            standard_nms(&[], &NmsParams::new(1.0)),
            Err(NmsError::InvalidTau(_))
        ));
    }

    fn set_of(samples: Vec<Vec<Instance>>) -> SampleSet {
        SampleSet {
            image_id: 0,
            width: 16,
            height: 16,
            samples: samples
                .into_iter()
                .map(|instances| Hypothesis { instances })
                .collect(),
            mode: None,
        }
    }

    #[test]
    fn union_nms_single_sample_equals_standard() {
        let a = rect(0..3, 0..3);
        let b = rect(8..11, 8..11);
        let set = set_of(vec![vec![
            Instance::new(a.clone(), 1, 0.9),
            Instance::new(b.clone(), 1, 0.8),
        ]]);
        let out = union_nms(&set, &NmsParams::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].mask, a);
        assert_eq!(out[1].mask, b);
    }

    #[test]
    fn union_recovers_larger_extent() {
        // same object seen as A and A∪delta across two samples
        let a = rect(0..4, 0..4);
        let a_delta = rect(0..4, 0..5);
        assert!(a.iou(&a_delta).unwrap() > 0.5);
        let set = set_of(vec![
            vec![Instance::new(a.clone(), 1, 0.9)],
            vec![Instance::new(a_delta.clone(), 1, 0.8)],
        ]);
        let out = union_nms(&set, &NmsParams::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].mask, a_delta);
        assert_eq!(out[0].score, 0.9);
    }

    #[test]
    fn union_matches_pixelwise_union_of_suppressed_set() {
        // three staggered views of one object
        let m1 = rect(0..4, 0..6);
        let m2 = rect(0..4, 1..7);
        let m3 = rect(0..4, 2..8);
        let set = set_of(vec![
            vec![Instance::new(m1.clone(), 1, 0.9)],
            vec![Instance::new(m2.clone(), 1, 0.8)],
            vec![Instance::new(m3.clone(), 1, 0.7)],
        ]);
        let flattened = [&m1, &m2, &m3];
        let outcome = standard_nms(
            &set.samples
                .iter()
                .flat_map(|h| h.instances.iter().cloned())
                .collect::<Vec<_>>(),
            &NmsParams::default(),
        )
        .unwrap();
        let out = union_nms(&set, &NmsParams::default()).unwrap();
        assert_eq!(out.len(), outcome.kept.len());
        for (instance, &keeper) in out.iter().zip(&outcome.kept) {
            let mut expected = flattened[keeper].clone();
            for (idx, sup) in outcome.suppressed_by.iter().enumerate() {
                if *sup == Some(keeper) {
                    expected = expected.union_of(flattened[idx]).unwrap();
                }
            }
            assert_eq!(instance.mask, expected);
            // every union output contains its keeper
            assert!(instance.mask.contains(flattened[keeper]).unwrap());
        }
    }

    #[test]
    fn each_input_in_at_most_one_suppressed_set() {
        let m1 = rect(0..4, 0..6);
        let m2 = rect(0..4, 1..7);
        let m3 = rect(0..4, 2..8);
        let instances = vec![
            Instance::new(m1, 1, 0.9),
            Instance::new(m2, 1, 0.8),
            Instance::new(m3, 1, 0.7),
        ];
        let outcome = standard_nms(&instances, &NmsParams::default()).unwrap();
        for &k in &outcome.kept {
            assert!(outcome.suppressed_by[k].is_none());
        }
        // suppressed_by maps each index to at most one keeper by construction;
        // check every suppressor is actually kept
        for sup in outcome.suppressed_by.iter().flatten() {
            assert!(outcome.kept.contains(sup));
        }
    }
}
