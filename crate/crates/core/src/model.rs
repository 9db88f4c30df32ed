//! Data model shared by every consumer: instances, hypotheses, sample sets,
//! and ground truth, with validation and deterministic ordering.
//!
//! All types are plain immutable values. Invariant checking is data, not
//! panics: [`validate`] returns a list of [`Violation`]s naming the offending
//! sample and instance so loaders can report every problem at once.

use crate::mask::BinaryMask;

/// One detected or annotated object: mask + category + confidence score.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub mask: BinaryMask,
    pub category: u32,
    pub score: f64,
}

impl Instance {
    pub fn new(mask: BinaryMask, category: u32, score: f64) -> Self {
        Instance {
            mask,
            category,
            score,
        }
    }
}

/// One complete segmentation of an image. Instances may overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub instances: Vec<Instance>,
}

/// `k` segmentation hypotheses sampled for one image, plus an optional
/// point-estimate hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub image_id: u64,
    pub width: u32,
    pub height: u32,
    pub samples: Vec<Hypothesis>,
    pub mode: Option<Hypothesis>,
}

impl SampleSet {
    /// Number of sampled hypotheses `k`.
    pub fn k(&self) -> usize {
        self.samples.len()
    }
}

/// Ground-truth annotations for one image. Instance scores are fixed at 1.0
/// so downstream code treats predictions and ground truth uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthImage {
    pub image_id: u64,
    pub width: u32,
    pub height: u32,
    pub instances: Vec<Instance>,
}

/// Where a violation was found inside a [`SampleSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    Sample { sample: usize, instance: usize },
    Mode { instance: usize },
    SampleSet,
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Site::Sample { sample, instance } => {
                write!(f, "sample {sample}, instance {instance}")
            }
            Site::Mode { instance } => write!(f, "mode hypothesis, instance {instance}"),
            Site::SampleSet => write!(f, "sample set"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoSamples,
    ScoreOutOfRange { site: Site, score: f64 },
    EmptyMask { site: Site },
    DimensionMismatch { site: Site, width: u32, height: u32 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NoSamples => write!(f, "sample set contains no hypotheses"),
            Violation::ScoreOutOfRange { site, score } => {
                write!(f, "{site}: score {score} outside [0, 1]")
            }
            Violation::EmptyMask { site } => write!(f, "{site}: mask has zero area"),
            Violation::DimensionMismatch {
                site,
                width,
                height,
            } => write!(
                f,
                "{site}: mask is {width}x{height}, image expects different dimensions"
            ),
        }
    }
}

/// Check every type invariant of a sample set. Empty result means valid.
pub fn validate(set: &SampleSet) -> Vec<Violation> {
    let mut violations = Vec::new();
    if set.samples.is_empty() {
        violations.push(Violation::NoSamples);
    }
    let mut check_hypothesis = |hypothesis: &Hypothesis, site_of: &dyn Fn(usize) -> Site| {
        for (i, inst) in hypothesis.instances.iter().enumerate() {
            let site = site_of(i);
            if !(0.0..=1.0).contains(&inst.score) || inst.score.is_nan() {
                violations.push(Violation::ScoreOutOfRange {
                    site,
                    score: inst.score,
                });
            }
            if inst.mask.width() != set.width || inst.mask.height() != set.height {
                violations.push(Violation::DimensionMismatch {
                    site,
                    width: inst.mask.width(),
                    height: inst.mask.height(),
                });
            } else if inst.mask.is_empty() {
                violations.push(Violation::EmptyMask { site });
            }
        }
    };
    for (s, hypothesis) in set.samples.iter().enumerate() {
        check_hypothesis(hypothesis, &|instance| Site::Sample {
            sample: s,
            instance,
        });
    }
    if let Some(mode) = &set.mode {
        check_hypothesis(mode, &|instance| Site::Mode { instance });
    }
    violations
}

/// Deterministic instance ordering: descending score, ties resolved by
/// original position. Returns the permutation of input indices.
///
/// For instances flattened from a sample set in `(sample, instance)` order,
/// the positional tie-break is exactly (sample index, then instance index).
pub fn canonical_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_mask(width: u32, height: u32) -> BinaryMask {
        BinaryMask::rect(width, height, 0..1, 0..1).unwrap()
    }

    fn well_formed() -> SampleSet {
        let inst = Instance::new(unit_mask(4, 4), 1, 0.8);
        SampleSet {
            image_id: 1,
            width: 4,
            height: 4,
            samples: vec![
                Hypothesis {
                    instances: vec![inst.clone()],
                },
                Hypothesis {
                    instances: vec![inst],
                },
            ],
            mode: None,
        }
    }

    #[test]
    fn validate_well_formed() {
        assert!(validate(&well_formed()).is_empty());
    }

    #[test]
    fn validate_flags_score_out_of_range() {
        let mut set = well_formed();
        set.samples[1].instances[0].score = 1.5;
        let violations = validate(&set);
        assert_eq!(
            violations,
            vec![Violation::ScoreOutOfRange {
                site: Site::Sample {
                    sample: 1,
                    instance: 0
                },
                score: 1.5,
            }]
        );
    }

    #[test]
    fn validate_flags_dimension_mismatch_with_sample_index() {
        let mut set = well_formed();
        set.samples[0].instances[0].mask = unit_mask(5, 4);
        let violations = validate(&set);
        assert_eq!(violations.len(), 1);
        assert!(matches!(
            violations[0],
            Violation::DimensionMismatch {
                site: Site::Sample {
                    sample: 0,
                    instance: 0
                },
                ..
            }
        ));
    }

    #[test]
    fn validate_flags_empty_sample_list() {
        let mut set = well_formed();
        set.samples.clear();
        assert_eq!(validate(&set), vec![Violation::NoSamples]);
    }

    #[test]
    fn canonical_order_sorts_descending() {
        assert_eq!(canonical_order(&[0.5, 0.9, 0.7]), vec![1, 2, 0]);
    }

    #[test]
    fn canonical_order_is_stable_under_ties() {
        assert_eq!(canonical_order(&[0.5, 0.5, 0.5]), vec![0, 1, 2]);
        assert_eq!(canonical_order(&[]), Vec::<usize>::new());
    }

    #[test]
    fn canonical_order_is_idempotent_permutation() {
        let scores = [0.3, 0.9, 0.9, 0.1, 0.3];
        let order = canonical_order(&scores);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        // applying the order, then ordering again, changes nothing
        let reordered: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
        assert_eq!(canonical_order(&reordered), vec![0, 1, 2, 3, 4]);
    }
}
